"""Emotion-word-preferring masked-LM example construction."""

import re
from dataclasses import dataclass

import numpy as np

from leia.lexicon import _PUNCT

IGNORE_INDEX = -100


@dataclass(frozen=True)
class MaskingConfig:
    p_emotion: float = 0.5
    p_other: float = 0.15
    mask_frac: float = 0.8
    random_frac: float = 0.1
    keep_frac: float = 0.1
    ignore_index: int = IGNORE_INDEX
    seed: int = 0

    def __post_init__(self):
        for name in ("p_emotion", "p_other", "mask_frac", "random_frac", "keep_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if abs(self.mask_frac + self.random_frac + self.keep_frac - 1.0) > 1e-9:
            raise ValueError("mask/random/keep split must sum to 1")

    @classmethod
    def plain(cls, **kw):
        """Uniform masking: emotion words get no preference."""
        kw.setdefault("p_other", 0.15)
        return cls(p_emotion=kw["p_other"], **kw)


@dataclass
class MaskedExample:
    input_ids: np.ndarray
    labels: np.ndarray
    emotion_mask: np.ndarray

    def __post_init__(self):
        if not (len(self.input_ids) == len(self.labels) == len(self.emotion_mask)):
            raise ValueError("input_ids, labels and emotion_mask differ in length")


def _emotion_spans(text, emotion_words):
    spans = []
    for m in re.finditer(r"\S+", text):
        word = m.group()
        lead = len(word) - len(word.lstrip(_PUNCT))
        core = word.strip(_PUNCT)
        if core and core.lower() in emotion_words:
            start = m.start() + lead
            spans.append((start, start + len(core)))
    return spans


def mark_emotion_tokens(text, tokenizer, emotion_words, max_length=128):
    """Boolean flags aligned with ``tokenizer.encode(text)``.

    A token is flagged when its character span overlaps a whole word found
    in ``emotion_words``; every piece of a split word is therefore flagged.
    Special tokens are never flagged.
    """
    _, offsets = tokenizer.encode_with_offsets(text, max_length)
    spans = _emotion_spans(text, emotion_words)
    flags = np.zeros(len(offsets), dtype=bool)
    for i, off in enumerate(offsets):
        if off is None:
            continue
        s, e = off
        flags[i] = any(s < ce and e > cs for cs, ce in spans)
    return flags


def make_mlm_example(token_ids, emotion_mask, cfg: MaskingConfig, rng, *,
                     mask_id, vocab_size, special_ids) -> MaskedExample:
    """Select positions for prediction and corrupt them.

    Emotion positions are selected with ``cfg.p_emotion`` and the rest with
    ``cfg.p_other``; selected positions become the mask token, a random
    non-special token, or stay unchanged according to the 80/10/10 split.
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    emo = np.asarray(emotion_mask, dtype=bool)
    if ids.shape != emo.shape:
        raise ValueError("token_ids and emotion_mask are not aligned")
    n = len(ids)
    special = np.isin(ids, np.fromiter(special_ids, dtype=np.int64))
    # fixed number of draws per call keeps the stream aligned across configs
    u_select = rng.random(n)
    u_action = rng.random(n)
    n_special = len(special_ids)
    random_tokens = rng.integers(n_special, max(vocab_size, n_special + 1), size=n)

    p = np.where(emo, cfg.p_emotion, cfg.p_other)
    selected = (u_select < p) & ~special

    labels = np.full(n, cfg.ignore_index, dtype=np.int64)
    labels[selected] = ids[selected]
    out = ids.copy()
    to_mask = selected & (u_action < cfg.mask_frac)
    to_random = selected & (u_action >= cfg.mask_frac) & (u_action < cfg.mask_frac + cfg.random_frac)
    out[to_mask] = mask_id
    out[to_random] = random_tokens[to_random]
    return MaskedExample(out, labels, emo.copy())


def masking_stats(examples, special_ids=(), ignore_index=IGNORE_INDEX):
    """Selection rates for emotion and other positions across examples.

    Special-token positions are left out of the "other" denominator.
    """
    specials = np.fromiter(special_ids, dtype=np.int64)
    sel_e = tot_e = sel_o = tot_o = 0
    for ex in examples:
        sel = ex.labels != ignore_index
        other = ~ex.emotion_mask & ~(~sel & np.isin(ex.input_ids, specials))
        sel_e += int((sel & ex.emotion_mask).sum())
        tot_e += int(ex.emotion_mask.sum())
        sel_o += int((sel & other).sum())
        tot_o += int(other.sum())
    return {
        "emotion_rate": sel_e / tot_e if tot_e else float("nan"),
        "other_rate": sel_o / tot_o if tot_o else float("nan"),
        "emotion_positions": tot_e,
        "other_positions": tot_o,
    }
