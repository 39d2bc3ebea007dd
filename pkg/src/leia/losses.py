"""Supervised contrastive, label-smoothed cross-entropy and joint losses."""

import torch
import torch.nn.functional as F


def supcon_loss(embeddings, labels, tau=0.3):
    """Supervised contrastive loss over a batch of unit-length embeddings.

    For each anchor, the log-probability of every same-label positive under a
    softmax over all other batch members is averaged; the loss is the
    negative of that, averaged over anchors that have at least one positive.
    Anchors without positives contribute nothing; a batch with none gives 0.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = embeddings
    labels = torch.as_tensor(labels, device=z.device)
    n = z.shape[0]
    if n < 2:
        raise ValueError("supcon_loss needs at least 2 examples")
    eye = torch.eye(n, dtype=torch.bool, device=z.device)
    sim = (z @ z.T) / tau
    sim = sim.masked_fill(eye, float("-inf"))
    log_prob = sim - torch.logsumexp(sim, dim=1, keepdim=True)
    pos = (labels[:, None] == labels[None, :]) & ~eye
    n_pos = pos.sum(1)
    summed = log_prob.masked_fill(~pos, 0.0).sum(1)
    has_pos = n_pos > 0
    if not bool(has_pos.any()):
        # keeps the graph; the + 0.0 turns a -0.0 into 0.0
        return z.sum() * 0.0 + 0.0
    per_anchor = -summed[has_pos] / n_pos[has_pos]
    return per_anchor.mean()


def smoothed_cross_entropy(logits, labels, eps=0.1):
    """Mean CE against ``(1 - eps) * onehot + eps / K``."""
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"smoothing must be in [0, 1), got {eps}")
    k = logits.shape[-1]
    logp = F.log_softmax(logits, dim=-1)
    target = torch.full_like(logp, eps / k)
    target.scatter_(-1, torch.as_tensor(labels, device=logits.device).long()[:, None], 1.0 - eps + eps / k)
    return -(target * logp).sum(-1).mean()


def joint_loss(logits, pooled, labels, lam=0.9, tau=0.3, eps=0.1):
    """(1 - lam) * smoothed CE + lam * SupCon on the L2-normalized pooled vectors."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"contrastive weight must be in [0, 1], got {lam}")
    ce = smoothed_cross_entropy(logits, labels, eps)
    if lam == 0.0:
        return ce
    sc = supcon_loss(F.normalize(pooled, dim=-1), labels, tau)
    if lam == 1.0:
        return sc
    return (1.0 - lam) * ce + lam * sc
