"""Dictionary base-frequency classifier and NBSVM."""

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from sklearn.svm import LinearSVC

from leia.labels import EMOTION_LABELS, EmotionLabel
from leia.lexicon import CategoryMap, EmotionLexicon, category_score, tokenize


# --- dictionary baseline -----------------------------------------------------

@dataclass
class DictionaryModel:
    category_map: CategoryMap
    base: dict  # lexicon category -> mean dev-set score
    lexicon: EmotionLexicon = field(default=None, repr=False)

    def __post_init__(self):
        if EmotionLabel.AFFECTION in self.category_map.values():
            raise ValueError("the dictionary baseline has no Affection category")
        for c, v in self.base.items():
            if v < 0:
                raise ValueError(f"negative base frequency for {c}")

    @property
    def labels(self):
        """Covered labels in the fixed label order."""
        covered = {lab.value for lab in self.category_map.values()}
        return tuple(lab for lab in EMOTION_LABELS if lab in covered)

    def category_for(self, label):
        label = EmotionLabel.parse(label)
        for c, lab in self.category_map.items():
            if lab == label:
                return c
        raise KeyError(f"no lexicon category mapped to {label}")

    def to_dict(self):
        return {"category_map": {c: l.value for c, l in self.category_map.items()},
                "base": dict(sorted(self.base.items()))}

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path, lexicon=None):
        with open(path, encoding="utf-8") as f:
            d = json.load(f)
        return cls(CategoryMap(d["category_map"]), d["base"], lexicon)


def fit_base_frequencies(dev_texts, lex: EmotionLexicon, cmap: CategoryMap = None) -> DictionaryModel:
    """Mean category score over the development texts, per mapped category."""
    cmap = cmap if cmap is not None else CategoryMap()
    dev_texts = list(dev_texts)
    if not dev_texts:
        raise ValueError("base frequencies need a non-empty development set")
    base = {}
    for c in cmap:
        base[c] = float(np.mean([category_score(t, c, lex) for t in dev_texts]))
    return DictionaryModel(cmap, base, lex)


def quotient_rule(score, base):
    """Present iff score / base > 1; with a zero base, present iff score > 0."""
    if base == 0:
        return score > 0
    return score / base > 1.0


def dict_predict(text, category, model: DictionaryModel) -> bool:
    """One-vs-rest presence decision for one lexicon category."""
    return quotient_rule(category_score(text, category, model.lexicon), model.base[category])


def dictionary_presence(texts, model: DictionaryModel):
    """``{label: [present?, ...]}`` over the covered labels."""
    out = {}
    for lab in model.labels:
        c = model.category_for(lab)
        out[lab] = [dict_predict(t, c, model) for t in texts]
    return out


# --- NBSVM -----------------------------------------------------------------

def nb_log_count_ratio(pos_counts, neg_counts, alpha=1.0):
    if alpha <= 0:
        raise ValueError("smoothing alpha must be positive")
    p = alpha + np.asarray(pos_counts, dtype=np.float64)
    q = alpha + np.asarray(neg_counts, dtype=np.float64)
    return np.log((p / p.sum()) / (q / q.sum()))


def build_vocab(token_lists, size=64000):
    """Top ``size`` unigrams by corpus frequency, ties broken alphabetically."""
    counts = Counter()
    for toks in token_lists:
        counts.update(toks)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [w for w, _ in ranked[:size]]


def binarize(token_lists, vocab):
    index = {w: i for i, w in enumerate(vocab)}
    rows, cols = [], []
    for r, toks in enumerate(token_lists):
        for c in sorted({index[t] for t in toks if t in index}):
            rows.append(r)
            cols.append(c)
    data = np.ones(len(rows), dtype=np.float64)
    return sparse.csr_matrix((data, (rows, cols)), shape=(len(token_lists), len(vocab)))


@dataclass
class NbsvmModel:
    vocab: list
    labels: tuple
    r: np.ndarray  # (labels, vocab)
    w: np.ndarray  # interpolated weights, (labels, vocab)
    b: np.ndarray  # (labels,)
    beta: float = 0.25
    alpha: float = 1.0
    C: float = 1.0

    def __post_init__(self):
        if len(self.vocab) > 64000:
            raise ValueError("NBSVM vocabulary capped at 64,000 unigrams")

    def decision_scores(self, texts):
        X = binarize([tokenize(t) for t in texts], self.vocab)
        scores = np.asarray((X @ (self.r * self.w).T)) + self.b[None, :]
        # no in-vocabulary token: nothing to decide on, all labels tie at 0
        empty = np.asarray(X.sum(1)).ravel() == 0
        scores[empty] = 0.0
        return scores

    def predict(self, texts):
        scores = self.decision_scores(texts)
        # argmax returns the first maximum, i.e. the earliest label in order
        return [self.labels[i] for i in scores.argmax(1)]

    def save(self, path):
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        np.savez(path / "weights.npz", r=self.r, w=self.w, b=self.b)
        manifest = {"vocab": self.vocab, "labels": list(self.labels),
                    "beta": self.beta, "alpha": self.alpha, "C": self.C,
                    "shapes": {"r": list(self.r.shape), "w": list(self.w.shape), "b": list(self.b.shape)}}
        with open(path / "manifest.json", "w", encoding="utf-8") as f:
            json.dump(manifest, f)
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        with open(path / "manifest.json", encoding="utf-8") as f:
            m = json.load(f)
        with np.load(path / "weights.npz") as z:
            return cls(m["vocab"], tuple(m["labels"]), z["r"], z["w"], z["b"], m["beta"], m["alpha"], m["C"])


def nbsvm_train(texts, labels, vocab_size=64000, beta=0.25, alpha=1.0, C=1.0) -> NbsvmModel:
    """One-vs-rest NBSVM on binarized unigram indicators.

    Per label the indicators are scaled by the log-count ratio, a linear
    L2-regularized max-margin classifier is fit, and its weights are
    interpolated as ``beta * mean(|w|) + (1 - beta) * w``.
    """
    labels = [str(lab) for lab in labels]
    texts = list(texts)
    if len(texts) != len(labels):
        raise ValueError("texts and labels differ in length")
    counts = Counter(labels)
    present = [lab for lab in EMOTION_LABELS if lab in counts] + sorted(set(counts) - set(EMOTION_LABELS))
    if len(present) < 2:
        raise ValueError("NBSVM needs at least two labels")
    thin = [lab for lab in present if counts[lab] < 2]
    if thin:
        raise ValueError(f"labels with fewer than 2 examples: {thin}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")

    toks = [tokenize(t) for t in texts]
    vocab = build_vocab(toks, min(vocab_size, 64000))
    X = binarize(toks, vocab)
    y = np.array(labels)
    R, W, B = [], [], []
    for lab in present:
        pos = y == lab
        r = nb_log_count_ratio(np.asarray(X[pos].sum(0)).ravel(), np.asarray(X[~pos].sum(0)).ravel(), alpha)
        svm = LinearSVC(C=C, random_state=0, max_iter=10000)
        svm.fit(X.multiply(r[None, :]).tocsr(), pos.astype(int))
        w = svm.coef_.ravel()
        w_bar = np.abs(w).mean() if len(w) else 0.0
        R.append(r)
        W.append(beta * w_bar + (1.0 - beta) * w)
        B.append(float(svm.intercept_[0]))
    return NbsvmModel(vocab, tuple(present), np.array(R), np.array(W), np.array(B), beta, alpha, C)


def nbsvm_predict(model: NbsvmModel, text) -> str:
    return model.predict([text])[0]
