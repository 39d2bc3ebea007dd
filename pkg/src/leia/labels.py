"""The closed emotion label sets."""

from enum import Enum


class EmotionLabel(str, Enum):
    # declaration order is the report order and the tie-break order
    SADNESS = "Sadness"
    ANGER = "Anger"
    FEAR = "Fear"
    AFFECTION = "Affection"
    HAPPINESS = "Happiness"

    def __str__(self):
        return self.value

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for label in cls:
            if label.value.lower() == key:
                return label
        raise ValueError(f"unknown emotion label: {value!r}")


EMOTION_LABELS = tuple(label.value for label in EmotionLabel)

# out-of-domain sets have no Affection; it is folded into Happiness
OOD_LABELS = ("Sadness", "Anger", "Fear", "Happiness")

LABEL_SETS = {"5class": EMOTION_LABELS, "4class": OOD_LABELS}


def label_index(label):
    return EMOTION_LABELS.index(EmotionLabel.parse(label).value)
