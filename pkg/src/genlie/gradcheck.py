"""Central finite-difference checks for the full model gradient."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aligner import ALIGNER_KEYS, reembed_backward
from .heads import LossWeights, speaker_forward_backward, triplet_hinges
from .model import ModelConfig, embed, init_params, loss_and_grads, param_order
from .rng import GRADCHECK, stream

STEP = 1e-5
REL_FLOOR = 1e-8


@dataclass
class TensorCheck:
    name: str
    max_rel_error: float
    checked: int
    skipped: int


def toy_problem(seed, dim=6, hidden=5, out_dim=4, n_speakers=3, batch=4):
    config = ModelConfig(dim=dim, hidden=hidden, out_dim=out_dim, dropout=0.0)
    params = init_params(config, n_speakers, seed)
    rng = stream(seed, GRADCHECK)
    pooled = rng.normal(size=(batch, dim))
    labels = rng.permutation(np.arange(batch) % 2)
    speakers = rng.integers(0, n_speakers, size=batch)
    return config, params, pooled, labels, speakers


def _objective(params, pooled, labels, speakers, weights, config, shared: bool):
    """Scalar whose plain gradient equals the GRL update direction.

    For parameters upstream of z the speaker term enters as -lambda*alpha*L_id;
    for head parameters the ordinary weighted total applies.
    """
    bd, _, _, _ = loss_and_grads(params, pooled, labels, speakers, weights, config, mode="eval")
    if shared:
        return bd.l_cls - weights.lam * weights.alpha * bd.l_id + weights.beta * bd.l_tri
    return bd.l_total


def _kink_state(params, pooled, labels, config, weights):
    z, cache = embed(params, pooled, config, "eval")
    relu = cache.pre > 0 if cache is not None else np.zeros(0, bool)
    return np.concatenate([relu.ravel(), triplet_hinges(z, labels, weights.margin) > 0])


def check_model_gradients(seed=42, dim=6, hidden=5, out_dim=4, n_speakers=3, batch=4,
                          weights=LossWeights(alpha=0.1, beta=0.1, lam=1.0, margin=0.2), step=STEP):
    config, params, pooled, labels, speakers = toy_problem(seed, dim, hidden, out_dim, n_speakers, batch)
    _, analytic, _, _ = loss_and_grads(params, pooled, labels, speakers, weights, config, mode="eval")
    base_state = _kink_state(params, pooled, labels, config, weights)
    results = []
    for name in param_order(params):
        shared = name in ALIGNER_KEYS
        theta = params[name]
        worst, checked, skipped = 0.0, 0, 0
        for idx in np.ndindex(theta.shape):
            orig = theta[idx]
            vals, kinked = [], False
            for sgn in (1.0, -1.0):
                theta[idx] = orig + sgn * step
                if not np.array_equal(_kink_state(params, pooled, labels, config, weights), base_state):
                    kinked = True
                vals.append(_objective(params, pooled, labels, speakers, weights, config, shared))
            theta[idx] = orig
            if kinked:
                skipped += 1
                continue
            numeric = (vals[0] - vals[1]) / (2.0 * step)
            a = analytic[name][idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), REL_FLOOR)
            worst = max(worst, err)
            checked += 1
        results.append(TensorCheck(name, worst, checked, skipped))
    return results


def id_branch_aligner_grads(params, pooled, speakers, weights, config, reverse=True):
    """Aligner gradients of alpha*L_id alone, with the GRL or with identity."""
    z, cache = embed(params, pooled, config, "eval")
    _, _, dz, _ = speaker_forward_backward(z, speakers, params, weights.lam, reverse=reverse)
    grads, _ = reembed_backward(cache, weights.alpha * dz)
    return grads
