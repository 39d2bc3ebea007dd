import numpy as np
import pytest

from leia.attribution import explain


def stub(token, label_idx=0, hi=0.9, lo=0.1):
    """Probability of label ``label_idx`` is ``hi`` iff ``token`` is present."""
    def predict(texts):
        out = []
        for t in texts:
            p = hi if token in t.split() else lo
            row = np.full(5, (1 - p) / 4)
            row[label_idx] = p
            out.append(row)
        return np.array(out)
    return predict


TEXT = "today i felt so lonely at home again"


def test_signal_token_dominates():
    exp = explain(stub("lonely"), TEXT, "Sadness", n_samples=500, seed=0)
    w = np.abs(exp.weights)
    i = exp.tokens.index("lonely")
    assert w[i] == w.max() and np.sum(w == w.max()) == 1
    assert exp.weights[i] > 0
    assert len(exp.weights) == len(exp.tokens) == 8
    assert abs(sum(exp.confidences) - 1) < 1e-6


def test_removing_top_token_lowers_probability():
    fn = stub("lonely")
    exp = explain(fn, TEXT, "Sadness", n_samples=300, seed=1)
    top = exp.top(1)[0][0]
    reduced = " ".join(t for t in TEXT.split() if t != top)
    assert fn([reduced])[0, 0] < fn([TEXT])[0, 0]


def test_constant_model_zero_weights():
    exp = explain(lambda ts: np.full((len(ts), 5), 0.2), TEXT, "Anger", n_samples=200)
    assert max(abs(w) for w in exp.weights) < 1e-6


def test_deterministic():
    a = explain(stub("home", 4), TEXT, "Happiness", n_samples=200, seed=3)
    b = explain(stub("home", 4), TEXT, "Happiness", n_samples=200, seed=3)
    assert a == b
    c = explain(stub("home", 4), TEXT, "Happiness", n_samples=200, seed=4)
    assert c.weights != a.weights


def test_failed_samples_dropped():
    base = stub("lonely")

    def flaky(texts):
        if len(texts) > 1:
            raise RuntimeError("batch too big")
        if "home" not in texts[0] and "at" not in texts[0]:
            raise RuntimeError("cannot score")
        return base(texts)

    exp = explain(flaky, TEXT, "Sadness", n_samples=100, seed=0)
    assert exp.dropped > 0 and exp.n_samples == 100 - exp.dropped
    assert np.isfinite(exp.weights).all()


def test_empty_text_and_tiny_penalty():
    with pytest.raises(ValueError):
        explain(stub("x"), "   ", "Sadness")
    with pytest.raises(ValueError):
        explain(stub("x"), "a b", "Sadness", alpha=0.0)


def test_single_token():
    exp = explain(stub("lonely"), "lonely", "Sadness", n_samples=50)
    assert exp.tokens == ["lonely"] and exp.weights[0] > 0


def test_to_dict():
    d = explain(stub("lonely"), TEXT, 0, n_samples=50).to_dict()
    assert d["target"] == "Sadness" and set(d["confidences"]) == {"Sadness", "Anger", "Fear", "Affection",
                                                                   "Happiness"}
