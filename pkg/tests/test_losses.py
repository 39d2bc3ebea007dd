import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings, strategies as st

from leia.losses import joint_loss, smoothed_cross_entropy, supcon_loss

# direct summation over the 4 vectors at 0, 10, 90, 100 degrees, labels a a b b, tau 0.3
ANGLES_SUPCON = 0.07814050056582642


def supcon_brute(z, labels, tau):
    z = np.asarray(z, dtype=np.float64)
    n = len(z)
    terms = []
    for i in range(n):
        pos = [p for p in range(n) if p != i and labels[p] == labels[i]]
        if not pos:
            continue
        denom = sum(math.exp(z[i] @ z[k] / tau) for k in range(n) if k != i)
        terms.append(-sum(math.log(math.exp(z[i] @ z[p] / tau) / denom) for p in pos) / len(pos))
    return float(np.mean(terms)) if terms else 0.0


def unit(rng, n, d):
    z = rng.normal(size=(n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def test_supcon_two_same_label_is_zero():
    z = torch.tensor(unit(np.random.default_rng(0), 2, 8))
    assert supcon_loss(z, [3, 3], 0.3).item() == pytest.approx(0.0, abs=1e-12)


def test_supcon_two_different_labels_is_zero():
    z = torch.tensor(unit(np.random.default_rng(1), 2, 8))
    assert supcon_loss(z, [0, 1], 0.3).item() == 0.0


def test_supcon_angles():
    z = [(math.cos(math.radians(a)), math.sin(math.radians(a))) for a in (0, 10, 90, 100)]
    assert supcon_brute(z, "aabb", 0.3) == pytest.approx(ANGLES_SUPCON, abs=1e-12)
    got = supcon_loss(torch.tensor(z, dtype=torch.float64), [0, 0, 1, 1], 0.3).item()
    assert got == pytest.approx(ANGLES_SUPCON, abs=1e-12)


@given(st.integers(2, 12), st.integers(1, 4), st.floats(0.05, 2.0), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_supcon_matches_brute_force(n, k, tau, seed):
    rng = np.random.default_rng(seed)
    z = unit(rng, n, 6)
    labels = rng.integers(k, size=n).tolist()
    got = supcon_loss(torch.tensor(z), labels, tau).item()
    assert got == pytest.approx(supcon_brute(z, labels, tau), rel=1e-9, abs=1e-9)
    assert got >= 0.0


def test_supcon_rotation_invariant():
    rng = np.random.default_rng(3)
    z = unit(rng, 10, 5)
    q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    labels = rng.integers(3, size=10).tolist()
    a = supcon_loss(torch.tensor(z), labels, 0.3).item()
    b = supcon_loss(torch.tensor(z @ q), labels, 0.3).item()
    assert abs(a - b) < 1e-6


def test_supcon_rejects_bad_temperature():
    with pytest.raises(ValueError):
        supcon_loss(torch.zeros(2, 2), [0, 0], 0.0)


@pytest.mark.parametrize("eps", [0.0, 0.1, 0.5, 0.9])
def test_uniform_predictor_gives_log5(eps):
    logits = torch.zeros(7, 5, dtype=torch.float64)
    labels = torch.tensor([0, 1, 2, 3, 4, 0, 2])
    assert abs(smoothed_cross_entropy(logits, labels, eps).item() - math.log(5)) < 1e-9


def test_confident_correct_is_near_zero():
    logits = F.one_hot(torch.tensor([1, 3]), 5).double() * 100
    assert smoothed_cross_entropy(logits, torch.tensor([1, 3]), 0.0).item() < 1e-9


def test_smoothed_ce_direct_formula():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(6, 5)) * 3
    labels = rng.integers(5, size=6)
    eps = 0.1
    total = 0.0
    for row, y in zip(logits, labels):
        logp = row - math.log(sum(math.exp(v) for v in row))
        target = [eps / 5 + (1 - eps if j == y else 0.0) for j in range(5)]
        total += -sum(t * lp for t, lp in zip(target, logp))
    got = smoothed_cross_entropy(torch.tensor(logits), torch.tensor(labels), eps).item()
    assert abs(got - total / 6) < 1e-6


def _batch(seed=0, n=4, hidden=6):
    g = torch.Generator().manual_seed(seed)
    return (torch.randn(n, 5, generator=g, dtype=torch.float64),
            torch.randn(n, hidden, generator=g, dtype=torch.float64))


def test_joint_limits():
    logits, pooled = _batch()
    labels = torch.tensor([0, 1, 0, 1])
    ce = smoothed_cross_entropy(logits, labels, 0.1)
    sc = supcon_loss(F.normalize(pooled, dim=-1), labels, 0.3)
    assert joint_loss(logits, pooled, labels, lam=0.0).item() == pytest.approx(ce.item(), abs=1e-12)
    assert joint_loss(logits, pooled, labels, lam=1.0).item() == pytest.approx(sc.item(), abs=1e-12)
    assert joint_loss(logits, pooled, labels).item() == pytest.approx(0.1 * ce.item() + 0.9 * sc.item(), abs=1e-12)


def test_single_class_batch_is_tenth_of_ce():
    # all four pooled vectors identical: every positive equals the whole denominator
    logits, _ = _batch(1)
    pooled = torch.ones(4, 6, dtype=torch.float64)
    labels = torch.tensor([2, 2, 2, 2])
    ce = smoothed_cross_entropy(logits, labels, 0.1).item()
    # SupCon with identical embeddings: each anchor has 3 positives sharing the mass -> log 3
    assert joint_loss(logits, pooled, labels).item() == pytest.approx(0.1 * ce + 0.9 * math.log(3), abs=1e-12)


def test_single_class_two_examples_supcon_zero():
    logits, pooled = _batch(2, n=2)
    labels = torch.tensor([4, 4])
    ce = smoothed_cross_entropy(logits, labels, 0.1).item()
    assert joint_loss(logits, pooled, labels).item() == pytest.approx(0.1 * ce, abs=1e-12)


def test_joint_gradient_matches_finite_differences():
    torch.manual_seed(0)
    hidden = 6
    feats = torch.randn(4, hidden, dtype=torch.float64)
    W = torch.randn(5, hidden, dtype=torch.float64, requires_grad=True)
    proj = torch.randn(hidden, hidden, dtype=torch.float64)
    labels = torch.tensor([0, 0, 1, 2])

    def loss_of(w):
        # pooled depends on the head weights too, so both terms carry gradient
        logits = feats @ w.T
        pooled = torch.tanh(feats @ proj + logits.sum(1, keepdim=True))
        return joint_loss(logits, pooled, labels)

    loss_of(W).backward()
    analytic = W.grad.clone()
    h = 1e-6
    numeric = torch.zeros_like(W)
    with torch.no_grad():
        for idx in np.ndindex(*W.shape):
            Wp, Wm = W.detach().clone(), W.detach().clone()
            Wp[idx] += h
            Wm[idx] -= h
            numeric[idx] = (loss_of(Wp) - loss_of(Wm)) / (2 * h)
    rel = (analytic - numeric).norm() / numeric.norm()
    assert rel.item() < 1e-3
