"""Segment pooling and the two-layer re-embedding MLP, with hand-written backward."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALIGNER_KEYS = ("W1", "b1", "W2", "b2")


class CacheError(RuntimeError):
    pass


def mean_pool(H) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] == 0:
        raise ValueError(f"mean_pool needs an (N>=1, D) matrix, got shape {H.shape}")
    return H.sum(axis=0) / H.shape[0]


def glorot(rng, fan_out, fan_in) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def init_aligner(rng, dim, hidden, out_dim) -> dict:
    return {
        "W1": glorot(rng, hidden, dim),
        "b1": np.zeros(hidden),
        "W2": glorot(rng, out_dim, hidden),
        "b2": np.zeros(out_dim),
    }


@dataclass
class AlignerCache:
    pooled: np.ndarray
    pre: np.ndarray
    post: np.ndarray
    mask: np.ndarray | None
    training: bool
    W1: np.ndarray
    W2: np.ndarray
    used: bool = False


def reembed_forward(pooled, params, mode="eval", rng=None, dropout_rate=0.0):
    """z = W2 · dropout(relu(W1 · pooled + b1)) + b2.

    ``pooled`` may be a single D-vector or a (B, D) batch. Dropout is inverted
    (kept units scaled by 1/(1-p)) and only applied when ``mode == "train"``.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError("dropout_rate must lie in [0, 1)")
    X = np.asarray(pooled, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    W1, b1, W2, b2 = (params[k] for k in ALIGNER_KEYS)
    if X.shape[1] != W1.shape[1]:
        raise ValueError(f"pooled input has dimension {X.shape[1]}, W1 expects {W1.shape[1]}")
    pre = X @ W1.T + b1
    post = np.maximum(pre, 0.0)
    mask = None
    if mode == "train" and dropout_rate > 0:
        if rng is None:
            raise ValueError("train-mode dropout needs an rng")
        keep = rng.random(post.shape) >= dropout_rate
        mask = keep / (1.0 - dropout_rate)
        hidden = post * mask
    else:
        hidden = post
    z = hidden @ W2.T + b2
    cache = AlignerCache(X, pre, post, mask, mode == "train", W1, W2)
    return (z[0] if single else z), cache


def reembed_backward(cache: AlignerCache, dz):
    """Gradients of the forward pass recorded in ``cache`` given dL/dz.

    Returns ``(grads, d_pooled)``; grads is keyed like the parameter dict.
    A cache can be consumed once.
    """
    if cache.used:
        raise CacheError("aligner cache already consumed by a backward pass")
    dz = np.atleast_2d(np.asarray(dz, dtype=np.float64))
    if dz.shape != (cache.pre.shape[0], cache.W2.shape[0]):
        raise CacheError(f"dL/dz shape {dz.shape} does not match cached forward {(cache.pre.shape[0], cache.W2.shape[0])}")
    cache.used = True
    hidden = cache.post if cache.mask is None else cache.post * cache.mask
    d_hidden = dz @ cache.W2
    if cache.mask is not None:
        d_hidden = d_hidden * cache.mask
    d_pre = d_hidden * (cache.pre > 0)
    grads = {
        "W1": d_pre.T @ cache.pooled,
        "b1": d_pre.sum(axis=0),
        "W2": dz.T @ hidden,
        "b2": dz.sum(axis=0),
    }
    d_pooled = d_pre @ cache.W1
    return grads, d_pooled
