"""Classification head, gradient-reversed speaker head, triplet loss, joint objective.

Every ``*_forward_backward`` returns the loss value together with dL/dz for
the shared embedding and the head's own parameter gradients. Losses are
batch means, so the returned dL/dz already carries the 1/B factor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_softmax

from . import kernels
from .aligner import glorot

PROB_CLAMP = 1e-12
HEAD_KEYS = ("w_cls", "b_cls", "W_spk", "b_spk")


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.1
    beta: float = 0.1
    lam: float = 1.0
    margin: float = 0.2

    def __post_init__(self):
        for name in ("alpha", "beta", "lam", "margin"):
            v = getattr(self, name)
            if not (v >= 0 and np.isfinite(v)):
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")


@dataclass(frozen=True)
class LossBreakdown:
    l_cls: float
    l_id: float
    l_tri: float
    l_total: float
    triplet_count: int = 0


def init_heads(rng, out_dim, n_speakers) -> dict:
    return {
        "w_cls": glorot(rng, 1, out_dim)[0],
        "b_cls": np.zeros(1),
        "W_spk": glorot(rng, n_speakers, out_dim),
        "b_spk": np.zeros(n_speakers),
    }


def _batch(z):
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[0] == 0:
        raise ValueError("empty batch")
    return z


def cls_forward_backward(z, labels, params):
    """Sigmoid + binary cross-entropy on one logit per sample."""
    z = _batch(z)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if y.shape[0] != z.shape[0]:
        raise ValueError("labels and embeddings differ in batch size")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    B = z.shape[0]
    logit = z @ params["w_cls"] + params["b_cls"][0]
    p = expit(logit)
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))
    d_logit = (p - y) / B
    grads = {"w_cls": d_logit @ z, "b_cls": np.array([d_logit.sum()])}
    dz = np.outer(d_logit, params["w_cls"])
    return p, loss, dz, grads


def grl_transform(grad, lam):
    """Backward rule of the gradient-reversal layer (its forward is the identity)."""
    if lam < 0:
        raise ValueError("GRL strength must be >= 0")
    return -lam * np.asarray(grad, dtype=np.float64)


def speaker_forward_backward(z, speaker_labels, params, lam=1.0, reverse=True):
    """Softmax speaker classifier fed through the GRL.

    The head's own gradients are ordinary; only dL/dz is reversed (unless
    ``reverse`` is False, which replaces the GRL by the identity).
    """
    z = _batch(z)
    s = np.asarray(speaker_labels, dtype=np.int64).reshape(-1)
    C = params["W_spk"].shape[0]
    if s.shape[0] != z.shape[0]:
        raise ValueError("speaker labels and embeddings differ in batch size")
    if np.any(s < 0) or np.any(s >= C):
        raise ValueError(f"speaker label outside [0, {C})")
    B = z.shape[0]
    logits = z @ params["W_spk"].T + params["b_spk"]
    logp = log_softmax(logits, axis=1)
    probs = np.exp(logp)
    loss = float(-np.mean(logp[np.arange(B), s]))
    d_logits = probs.copy()
    d_logits[np.arange(B), s] -= 1.0
    d_logits /= B
    grads = {"W_spk": d_logits.T @ z, "b_spk": d_logits.sum(axis=0)}
    dz = d_logits @ params["W_spk"]
    if reverse:
        dz = grl_transform(dz, lam)
    return probs, loss, dz, grads


def triplet_loss(z_a, z_p, z_n, margin):
    """Hinge on squared distances; returns (value, (g_a, g_p, g_n))."""
    z_a, z_p, z_n = (np.asarray(v, dtype=np.float64) for v in (z_a, z_p, z_n))
    if not (z_a.shape == z_p.shape == z_n.shape):
        raise ValueError("triplet members must share one shape")
    d_ap = float(np.sum((z_a - z_p) ** 2))
    d_an = float(np.sum((z_a - z_n) ** 2))
    value = d_ap - d_an + margin
    if value <= 0:
        zero = np.zeros_like(z_a)
        return 0.0, (zero, zero.copy(), zero.copy())
    return value, (2.0 * (z_n - z_p), 2.0 * (z_p - z_a), 2.0 * (z_a - z_n))


def mine_triplets(labels, speaker_ids=None):
    """Every ordered (anchor, positive, negative) with a matching positive label.

    ``speaker_ids`` is accepted for interface symmetry; batch-all enumeration
    already includes both same-speaker and cross-speaker positives.
    """
    labels = np.asarray(labels).reshape(-1)
    if labels.shape[0] < 2:
        raise ValueError("triplet mining needs a batch of at least 2")
    B = labels.shape[0]
    return [
        (a, p, n)
        for a in range(B)
        for p in range(B)
        if p != a and labels[p] == labels[a]
        for n in range(B)
        if labels[n] != labels[a]
    ]


def triplet_forward_backward(z, labels, margin):
    """Batch-all triplet loss averaged over triplets with positive hinge.

    Returns ``(l_tri, dz, n_active)``.
    """
    z = _batch(z)
    loss, grad, n_active, _ = kernels.triplet_batch_all(z, np.asarray(labels, dtype=np.int64), margin)
    return loss, grad, n_active


def triplet_hinges(z, labels, margin) -> np.ndarray:
    """Hinge argument of every mined triplet (diagnostics and kink detection)."""
    z = _batch(z)
    trip = mine_triplets(labels)
    if not trip:
        return np.zeros(0)
    a, p, n = (np.array(c) for c in zip(*trip))
    d_ap = ((z[a] - z[p]) ** 2).sum(axis=1)
    d_an = ((z[a] - z[n]) ** 2).sum(axis=1)
    return d_ap - d_an + margin


def total_loss(l_cls, l_id, l_tri, weights: LossWeights, triplet_count=0) -> LossBreakdown:
    for name, v in (("l_cls", l_cls), ("l_id", l_id), ("l_tri", l_tri)):
        if not np.isfinite(v):
            raise FloatingPointError(f"{name} is not finite ({v})")
    total = l_cls + weights.alpha * l_id + weights.beta * l_tri
    return LossBreakdown(float(l_cls), float(l_id), float(l_tri), float(total), int(triplet_count))
