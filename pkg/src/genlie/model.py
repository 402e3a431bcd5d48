"""Aligner + heads wired into one objective with a single backward pass."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aligner import ALIGNER_KEYS, init_aligner, reembed_backward, reembed_forward
from .heads import (
    HEAD_KEYS,
    LossWeights,
    cls_forward_backward,
    init_heads,
    speaker_forward_backward,
    total_loss,
    triplet_forward_backward,
)
from .rng import INIT, stream


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 768
    hidden: int = 1024
    out_dim: int = 768
    dropout: float = 0.3
    use_reembedding: bool = True

    def __post_init__(self):
        if min(self.dim, self.hidden, self.out_dim) < 1:
            raise ValueError("model dimensions must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def embed_dim(self) -> int:
        return self.out_dim if self.use_reembedding else self.dim


def init_params(config: ModelConfig, n_speakers: int, seed: int) -> dict:
    rng = stream(seed, INIT)
    params = {}
    if config.use_reembedding:
        params.update(init_aligner(rng, config.dim, config.hidden, config.out_dim))
    params.update(init_heads(rng, config.embed_dim, n_speakers))
    return params


def param_order(params) -> list:
    return [k for k in ALIGNER_KEYS + HEAD_KEYS if k in params]


def embed(params, pooled, config: ModelConfig, mode="eval", rng=None):
    """Video embeddings for a (B, D) batch of pooled segment features."""
    pooled = np.atleast_2d(np.asarray(pooled, dtype=np.float64))
    if not config.use_reembedding:
        return pooled, None
    return reembed_forward(pooled, params, mode, rng, config.dropout)


def effective_weights(weights: LossWeights, use_id_loss=True, use_triplet_loss=True) -> LossWeights:
    return LossWeights(
        alpha=weights.alpha if use_id_loss else 0.0,
        beta=weights.beta if use_triplet_loss else 0.0,
        lam=weights.lam,
        margin=weights.margin,
    )


def loss_and_grads(params, pooled, labels, speakers, weights: LossWeights, config: ModelConfig,
                   mode="train", rng=None, reverse=True):
    """Joint objective and its GRL-aware gradients for one batch.

    Head gradients are plain gradients of the weighted total; the gradient
    that reaches the aligner carries the speaker term negated and scaled by
    lambda (or unreversed when ``reverse`` is False).

    Returns ``(breakdown, grads, probs, z)``.
    """
    z, cache = embed(params, pooled, config, mode, rng)
    p, l_cls, dz_cls, g_cls = cls_forward_backward(z, labels, params)
    _, l_id, dz_id, g_spk = speaker_forward_backward(z, speakers, params, weights.lam, reverse=reverse)
    l_tri, dz_tri, n_active = triplet_forward_backward(z, labels, weights.margin)
    breakdown = total_loss(l_cls, l_id, l_tri, weights, n_active)

    grads = dict(g_cls)
    grads["W_spk"] = weights.alpha * g_spk["W_spk"]
    grads["b_spk"] = weights.alpha * g_spk["b_spk"]
    if cache is not None:
        dz = dz_cls + weights.alpha * dz_id + weights.beta * dz_tri
        g_align, _ = reembed_backward(cache, dz)
        grads.update(g_align)
    return breakdown, grads, p, z
