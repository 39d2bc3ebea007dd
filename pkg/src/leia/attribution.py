"""LIME-style word attributions for text classifiers."""

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.linear_model import Ridge

from leia.labels import EMOTION_LABELS

logger = logging.getLogger(__name__)


@dataclass
class Explanation:
    target: str
    tokens: list
    weights: list
    confidences: list
    n_samples: int
    seed: int
    intercept: float = 0.0
    dropped: int = 0

    def __post_init__(self):
        if len(self.tokens) != len(self.weights):
            raise ValueError("one weight per token expected")

    def top(self, k=5):
        order = np.argsort(-np.abs(self.weights), kind="stable")[:k]
        return [(self.tokens[i], self.weights[i]) for i in order]

    def to_dict(self):
        return {
            "target": self.target, "tokens": self.tokens, "weights": self.weights,
            "confidences": dict(zip(EMOTION_LABELS, self.confidences))
            if len(self.confidences) == len(EMOTION_LABELS) else self.confidences,
            "n_samples": self.n_samples, "seed": self.seed,
            "intercept": self.intercept, "dropped": self.dropped,
        }


def _score(predict_fn, texts):
    """Scores for all texts; rows that fail to score come back as NaN."""
    try:
        return np.asarray(predict_fn(texts), dtype=np.float64)
    except Exception:
        logger.warning("batch scoring failed, retrying one perturbation at a time")
    rows = []
    for t in texts:
        try:
            rows.append(np.asarray(predict_fn([t]), dtype=np.float64)[0])
        except Exception:
            rows.append(None)
    width = next((len(r) for r in rows if r is not None), 1)
    return np.array([r if r is not None else np.full(width, np.nan) for r in rows])


def explain(predict_fn, text, target, n_samples=1000, kernel_width=None, seed=0,
            alpha=1.0, labels=EMOTION_LABELS):
    """Fit a weighted ridge surrogate on word-presence perturbations.

    ``predict_fn`` maps a list of texts to an ``(n, K)`` probability array.
    The first sample is the unperturbed text; each other sample deletes a
    uniformly chosen number of words. Samples are weighted by
    ``exp(-d**2 / kernel_width**2)`` with ``d`` the cosine distance to the
    original presence vector; ``kernel_width`` defaults to ``0.75 * sqrt(d)``.
    """
    tokens = text.split()
    d = len(tokens)
    if d == 0:
        raise ValueError("cannot explain an empty text")
    if alpha < 1e-6:
        raise ValueError("ridge penalty must be at least 1e-6")
    target_idx = labels.index(str(target)) if not isinstance(target, (int, np.integer)) else int(target)
    kernel_width = 0.75 * np.sqrt(d) if kernel_width is None else kernel_width

    rng = np.random.default_rng(seed)
    Z = np.ones((n_samples, d), dtype=np.int8)
    for i in range(1, n_samples):
        k = rng.integers(1, d + 1)
        Z[i, rng.choice(d, size=k, replace=False)] = 0
    texts = [" ".join(t for t, z in zip(tokens, row) if z) for row in Z]
    probs = _score(predict_fn, texts)
    ok = np.isfinite(probs).all(1)
    dropped = int((~ok).sum())
    if not ok[0]:
        raise RuntimeError("the model failed to score the unperturbed text")
    Z, probs = Z[ok].astype(np.float64), probs[ok]

    norms = np.sqrt(Z.sum(1))
    cos = np.where(norms > 0, Z.sum(1) / (np.maximum(norms, 1e-12) * np.sqrt(d)), 0.0)
    dist = 1.0 - cos
    sw = np.exp(-(dist ** 2) / kernel_width ** 2)
    y = probs[:, target_idx]
    ridge = Ridge(alpha=alpha, fit_intercept=True)
    ridge.fit(Z, y, sample_weight=sw)
    coef = ridge.coef_
    # a constant target leaves only round-off in the coefficients
    if np.ptp(y) == 0:
        coef = np.zeros_like(coef)
    return Explanation(
        target=labels[target_idx], tokens=tokens, weights=[float(w) for w in coef],
        confidences=[float(p) for p in probs[0]], n_samples=int(ok.sum()), seed=seed,
        intercept=float(ridge.intercept_), dropped=dropped,
    )
