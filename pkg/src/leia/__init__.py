"""Writer-labeled emotion identification: corpus cleaning, splits, eMLM
pre-training, probe-then-fine-tune classification, weight soups, baselines
and bootstrap evaluation at desk scale."""

from leia.labels import EMOTION_LABELS, OOD_LABELS, EmotionLabel

__version__ = "0.1.0"

__all__ = ["EmotionLabel", "EMOTION_LABELS", "OOD_LABELS", "__version__"]
