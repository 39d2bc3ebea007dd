"""Scoring: per-class and macro F1, percentile bootstrap intervals,
out-of-domain label mapping, enISEAR masking, model ranking, error samples
and report tables."""

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from leia.labels import EMOTION_LABELS

MASK_TOKEN = "<mask>"


@dataclass(frozen=True)
class LabeledPrediction:
    id: str
    gold: str
    pred: str
    dataset: str = ""


def _encode(golds, preds, label_set):
    label_set = list(label_set)
    if len(golds) != len(preds):
        raise ValueError(f"{len(golds)} golds vs {len(preds)} predictions")
    if len(golds) == 0:
        raise ValueError("nothing to score")
    index = {lab: i for i, lab in enumerate(label_set)}
    try:
        g = np.array([index[str(x)] for x in golds], dtype=np.int64)
        p = np.array([index[str(x)] for x in preds], dtype=np.int64)
    except KeyError as e:
        raise ValueError(f"label {e.args[0]!r} not in label set {label_set}") from None
    return g, p, label_set


def _f1_from_counts(tp, n_gold, n_pred):
    # 2PR/(P+R) == 2TP/(|gold| + |pred|); zero when nothing is predicted or present
    denom = n_gold + n_pred
    return np.where(denom > 0, 2.0 * tp / np.maximum(denom, 1), 0.0) * 100.0


def _per_class(g, p, k):
    """Per-class F1 (percent) for rows of index arrays; g, p shape (..., n)."""
    tp = np.stack([((g == c) & (p == c)).sum(-1) for c in range(k)], -1)
    ng = np.stack([(g == c).sum(-1) for c in range(k)], -1)
    npred = np.stack([(p == c).sum(-1) for c in range(k)], -1)
    return _f1_from_counts(tp, ng, npred)


def macro_f1(golds, preds, label_set):
    """Per-class F1 and their unweighted mean over ``label_set``, in percent."""
    g, p, labels = _encode(golds, preds, label_set)
    f1 = _per_class(g, p, len(labels))
    return {lab: float(v) for lab, v in zip(labels, f1)}, float(f1.mean())


def _resample_indices(n, B, seed):
    # one draw of n indices per replicate, in replicate order
    rng = np.random.default_rng(seed)
    return np.stack([rng.integers(0, n, size=n) for _ in range(B)]) if B else np.zeros((0, n), np.int64)


def _percentiles(samples, level):
    lo = (1.0 - level) / 2.0 * 100.0
    hi = (1.0 + level) / 2.0 * 100.0
    return np.percentile(samples, [lo, hi], axis=0)


def _replicate_f1(tp, n_gold, n_pred, present):
    """F1 per replicate and class; NaN where a class seen in the full sample
    is missing from the resample altogether (0/0 there is undefined, not a
    miss). Classes absent from the full sample stay at 0 as in the point
    estimate."""
    f1 = _f1_from_counts(tp, n_gold, n_pred)
    return np.where(((n_gold + n_pred) == 0) & present, np.nan, f1)


def _intervals(boot, level, point):
    """Percentile bounds of macro and per-class replicate scores."""
    macro = np.nanmean(boot, axis=1)
    out = {"macro": tuple(float(x) for x in _percentiles(macro, level))}
    lo = (1.0 - level) / 2.0 * 100.0
    hi = (1.0 + level) / 2.0 * 100.0
    for j in range(boot.shape[1]):
        col = boot[:, j][~np.isnan(boot[:, j])]
        out[j] = (float(np.percentile(col, lo)), float(np.percentile(col, hi))) if len(col) \
            else (float(point[j]), float(point[j]))
    return out


def bootstrap_ci(golds, preds, label_set, B=10000, level=0.95, seed=0, chunk=500):
    """Percentile bootstrap intervals for macro-F1 and each per-class F1.

    Every replicate resamples ``n`` instances with replacement and all
    metrics are recomputed from that same resample. Returns
    ``{"macro": (low, high), label: (low, high), ...}``.
    """
    g, p, labels = _encode(golds, preds, label_set)
    n, k = len(g), len(labels)
    present = np.array([((g == c) | (p == c)).any() for c in range(k)])
    point = _per_class(g[None], p[None], k)[0]
    idx = _resample_indices(n, B, seed)
    boot = np.empty((B, k))
    for s in range(0, B, chunk):
        gs, ps = g[idx[s: s + chunk]], p[idx[s: s + chunk]]
        tp = np.stack([((gs == c) & (ps == c)).sum(-1) for c in range(k)], -1)
        ng = np.stack([(gs == c).sum(-1) for c in range(k)], -1)
        npred = np.stack([(ps == c).sum(-1) for c in range(k)], -1)
        boot[s: s + chunk] = _replicate_f1(tp, ng, npred, present)
    iv = _intervals(boot, level, point)
    return {"macro": iv["macro"], **{lab: iv[j] for j, lab in enumerate(labels)}}


def binary_f1(gold_bool, pred_bool):
    g = np.asarray(gold_bool, bool)
    p = np.asarray(pred_bool, bool)
    return float(_f1_from_counts((g & p).sum(-1), g.sum(-1), p.sum(-1)))


def one_vs_rest_scores(golds, presence, labels, B=10000, level=0.95, seed=0):
    """One-vs-rest binary F1 per label plus their mean, with bootstrap CIs.

    ``presence[label]`` holds the per-instance present/absent decisions.
    """
    golds = [str(x) for x in golds]
    n = len(golds)
    if n == 0:
        raise ValueError("nothing to score")
    G = np.stack([np.array([x == lab for x in golds]) for lab in labels])
    P = np.stack([np.asarray(presence[lab], bool) for lab in labels])
    if P.shape[1] != n:
        raise ValueError("presence vectors and golds differ in length")
    point = _f1_from_counts((G & P).sum(1), G.sum(1), P.sum(1))
    present = (G | P).any(1)
    idx = _resample_indices(n, B, seed)
    boot = np.empty((B, len(labels)))
    for s in range(0, B, 500):
        rows = idx[s: s + 500]
        Gs, Ps = G[:, rows], P[:, rows]
        boot[s: s + 500] = _replicate_f1((Gs & Ps).sum(-1), Gs.sum(-1), Ps.sum(-1), present[:, None]).T
    per_class = {lab: float(v) for lab, v in zip(labels, point)}
    iv = _intervals(boot, level, point)
    ci = {"macro": iv["macro"], **{lab: iv[j] for j, lab in enumerate(labels)}}
    return per_class, float(point.mean()), ci


@dataclass
class EvalReport:
    dataset: str
    model: str
    n: int
    per_class: dict
    macro: float
    ci: dict = field(default_factory=dict)
    label_set: tuple = EMOTION_LABELS
    mode: str = "multiclass"

    def check(self):
        metrics = {"macro": self.macro, **self.per_class}
        for name, v in metrics.items():
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"{name} F1 {v} outside [0, 100]")
        return self

    def to_dict(self):
        return {
            "dataset": self.dataset, "model": self.model, "n": self.n, "mode": self.mode,
            "label_set": list(self.label_set), "macro": self.macro,
            "per_class": self.per_class, "ci": {k: list(v) for k, v in self.ci.items()},
        }


def evaluate(golds, preds, label_set=EMOTION_LABELS, B=10000, seed=0, dataset="", model="", level=0.95):
    per_class, macro = macro_f1(golds, preds, label_set)
    ci = bootstrap_ci(golds, preds, label_set, B, level, seed) if B else {}
    return EvalReport(dataset, model, len(golds), per_class, macro, ci, tuple(label_set)).check()


def evaluate_one_vs_rest(golds, presence, labels, B=10000, seed=0, dataset="", model="", level=0.95):
    per_class, macro, ci = one_vs_rest_scores(golds, presence, labels, B, level, seed)
    return EvalReport(dataset, model, len(golds), per_class, macro, ci, tuple(labels), "one-vs-rest").check()


# --- out-of-domain preparation ---------------------------------------------

_OOD_SYNONYMS = {
    "sadness": "Sadness", "sad": "Sadness",
    "anger": "Anger", "angry": "Anger",
    "fear": "Fear",
    "happiness": "Happiness", "joy": "Happiness", "affection": "Happiness",
}


def map_ood_labels(label) -> Optional[str]:
    """Fold a dataset label into the 4-class scheme; None means exclude."""
    if label is None:
        return None
    return _OOD_SYNONYMS.get(str(label).strip().lower())


# emotion words of the seven enISEAR prompts, plus common variants
ENISEAR_EMOTION_WORDS = frozenset("""
angry anger mad furious annoyed irritated
disgusted disgust
afraid scared frightened fearful terrified fear anxious nervous worried
guilty guilt
happy joyful joy glad delighted
sad sadness unhappy upset depressed
ashamed shame embarrassed
""".split())

_ENISEAR_RE = re.compile(r"^(\s*I\s+felt\s+)(.+?)(\s+(?:when|because)\b.*)$", re.IGNORECASE | re.DOTALL)


def enisear_template_match(text):
    return _ENISEAR_RE.match(text) is not None


def prepare_enisear(text, emotion_words=None, with_flag=False):
    """Replace the emotion word of an "I felt X when/because ..." text with
    ``<mask>``.

    Within the span between "felt" and the connective, the last word found
    in ``emotion_words`` is replaced (modifiers such as "deeply" stay); if no
    word is listed, the last word of the span is taken as the emotion word.
    Texts that do not fit the template are returned unchanged, and with
    ``with_flag=True`` a ``(text, matched)`` pair is returned instead.
    """
    words = ENISEAR_EMOTION_WORDS if emotion_words is None else frozenset(emotion_words) | ENISEAR_EMOTION_WORDS
    m = _ENISEAR_RE.match(text)
    if m is None:
        return (text, False) if with_flag else text
    head, span, tail = m.groups()
    toks = span.split(" ")
    if MASK_TOKEN in toks:
        return (text, True) if with_flag else text
    pick = None
    for i, tok in enumerate(toks):
        if tok.strip(".,!?;:").lower() in words:
            pick = i
    if pick is None:
        pick = max(i for i, t in enumerate(toks) if t) if any(toks) else None
    if pick is None:
        return (text, False) if with_flag else text
    core = toks[pick].strip(".,!?;:")
    toks[pick] = toks[pick].replace(core, MASK_TOKEN, 1) if core else MASK_TOKEN
    out = head + " ".join(toks) + tail
    return (out, True) if with_flag else out


# --- ranking, error sampling -----------------------------------------------

def average_rank(scores):
    """Mean rank per model over datasets; rank 1 is the best score per
    dataset and ties share the mean rank.

    ``scores`` is ``{model: {dataset: score}}`` or a DataFrame with models
    as rows.
    """
    if hasattr(scores, "to_dict") and hasattr(scores, "index"):
        scores = {m: row.to_dict() for m, row in scores.iterrows()}
    models = list(scores)
    if not models:
        return {}
    datasets = []
    for m in models:
        for d in scores[m]:
            if d not in datasets:
                datasets.append(d)
    mat = np.empty((len(models), len(datasets)))
    for i, m in enumerate(models):
        for j, d in enumerate(datasets):
            v = scores[m].get(d)
            if v is None or (isinstance(v, float) and np.isnan(v)):
                raise ValueError(f"missing score for model {m!r} on dataset {d!r}")
            mat[i, j] = float(v)
    ranks = np.column_stack([rankdata(-mat[:, j], method="average") for j in range(len(datasets))])
    return {m: float(r) for m, r in zip(models, ranks.mean(1))}


def sample_errors(predictions, per_label=10, seed=0):
    """Up to ``per_label`` uniformly drawn misclassifications per gold label."""
    preds = [p if isinstance(p, LabeledPrediction) else LabeledPrediction(**p) for p in predictions]
    errors = {}
    for p in preds:
        if p.gold != p.pred:
            errors.setdefault(p.gold, []).append(p)
    order = [lab for lab in EMOTION_LABELS if lab in errors] + sorted(set(errors) - set(EMOTION_LABELS))
    rng = np.random.default_rng(seed)
    out = []
    for lab in order:
        errs = errors[lab]
        if len(errs) <= per_label:
            out.extend(errs)
        else:
            pick = np.sort(rng.choice(len(errs), size=per_label, replace=False))
            out.extend(errs[i] for i in pick)
    return out


# --- report emitters --------------------------------------------------------

def _fmt(v):
    return f"{v:.2f}"


def _cell(report, metric="macro"):
    v = report.macro if metric == "macro" else report.per_class[metric]
    if metric in report.ci:
        lo, hi = report.ci[metric]
        return f"{_fmt(v)}[{_fmt(lo)},{_fmt(hi)}]"
    return _fmt(v)


def macro_table(reports, rank=False):
    """Markdown table: datasets as rows, models as columns (Tables 3/5), or
    models as rows with an average-rank column when ``rank`` is set
    (Tables 6/7)."""
    models = list(dict.fromkeys(r.model for r in reports))
    datasets = list(dict.fromkeys(r.dataset for r in reports))
    by = {(r.model, r.dataset): r for r in reports}
    lines = []
    if not rank:
        lines.append("| | " + " | ".join(models) + " |")
        lines.append("|---" * (len(models) + 1) + "|")
        for d in datasets:
            cells = [_cell(by[(m, d)]) if (m, d) in by else "" for m in models]
            lines.append(f"| {d} | " + " | ".join(cells) + " |")
    else:
        ranks = average_rank({m: {d: by[(m, d)].macro for d in datasets} for m in models})
        lines.append("| | " + " | ".join(datasets) + " | Average rank |")
        lines.append("|---" * (len(datasets) + 2) + "|")
        for m in models:
            cells = [_cell(by[(m, d)]) for d in datasets]
            lines.append(f"| {m} | " + " | ".join(cells) + f" | {ranks[m]:.2f} |")
    return "\n".join(lines) + "\n"


def per_class_rows(reports):
    """Long-form rows (dataset, model, mode, label, f1, low, high) for bar plots."""
    rows = []
    for r in reports:
        for lab in r.label_set:
            lo, hi = r.ci.get(lab, (None, None))
            rows.append([r.dataset, r.model, r.mode, lab, r.per_class[lab], lo, hi])
        lo, hi = r.ci.get("macro", (None, None))
        rows.append([r.dataset, r.model, r.mode, "macro", r.macro, lo, hi])
    return rows


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (f"{v:.4f}" if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def write_reports(reports, out_dir, name="results", rank=False):
    """Write ``<name>.md``, ``<name>.csv`` (macro) and ``<name>_per_class.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.md").write_text(macro_table(reports, rank=rank), encoding="utf-8")
    macro_rows = [[r.dataset, r.model, r.mode, r.n, r.macro, *r.ci.get("macro", (None, None))] for r in reports]
    (out / f"{name}.csv").write_text(
        _csv_text(["dataset", "model", "mode", "n", "macro_f1", "ci_low", "ci_high"], macro_rows), encoding="utf-8")
    (out / f"{name}_per_class.csv").write_text(
        _csv_text(["dataset", "model", "mode", "label", "f1", "ci_low", "ci_high"], per_class_rows(reports)),
        encoding="utf-8")
    return out

