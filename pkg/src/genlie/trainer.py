"""Batching, Adam, the training loop and evaluation."""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_softmax

from .aligner import mean_pool
from .checkpoint import save_checkpoint
from .encoder import DimensionMismatchError, FeatureBank
from .heads import LossWeights
from .metrics import MetricsReport, metrics_report
from .model import ModelConfig, effective_weights, embed, init_params, loss_and_grads
from .preprocess import FRAME_BUDGET, PreprocessConfig, preprocess
from .rng import BATCHING, DROPOUT, stream

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "l_cls", "l_id", "l_tri", "l_total", "f1", "acc", "auc", "speaker_probe_acc")


class NonFiniteError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    weight_decay: float = 1e-4
    batch_size: int = 8
    epochs: int = 10
    seed: int = 42
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    use_temporal_segmentation: bool = True
    use_reembedding: bool = True
    use_id_loss: bool = True
    use_triplet_loss: bool = True
    eval_every: int = 1
    checkpoint_every: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.batch_size < 2 and (self.use_id_loss or self.use_triplet_loss):
            raise ValueError("batch_size must be >= 2 when the id or triplet loss is enabled")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.eval_every < 0 or self.checkpoint_every < 0:
            raise ValueError("eval_every and checkpoint_every must be >= 0")


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state: AdamState, lr, weight_decay=0.0, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update with L2 decay folded into the gradient."""
    for name in params:
        g = grads[name]
        if g.shape != params[name].shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter has {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in tensor {name!r}")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, theta in params.items():
        g = grads[name] + weight_decay * theta if weight_decay else grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        theta -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


# ---------------------------------------------------------------------------
# batching


@dataclass
class BatchPlan:
    batches: list
    single_label: bool = False

    def __iter__(self):
        return iter(self.batches)

    def __len__(self):
        return len(self.batches)


def _speaker_round_robin(videos, rng):
    by_spk = {}
    for v in videos:
        by_spk.setdefault(v.speaker_id, []).append(v.video_id)
    queues = []
    for spk in sorted(by_spk):
        ids = sorted(by_spk[spk])
        queues.append([ids[i] for i in rng.permutation(len(ids))])
    queues = [queues[i] for i in rng.permutation(len(queues))]
    out = []
    while any(queues):
        for q in queues:
            if q:
                out.append(q.pop())
    return out


def make_batches(manifest, batch_size, seed, epoch) -> BatchPlan:
    """Seeded, label-interleaved, speaker-rotating partition into batches.

    Each label's videos are ordered round-robin over speakers, then the label
    streams are merged at proportional positions and cut into consecutive
    batches, so a batch holds both labels and distinct speakers when the
    corpus has them. The last batch may be short.
    """
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    if len(manifest.videos) == 0:
        raise ValueError("empty dataset")
    rng = stream(seed, BATCHING, epoch)
    keyed = []
    labels = sorted({v.label for v in manifest.videos})
    for label in labels:
        ids = _speaker_round_robin([v for v in manifest.videos if v.label == label], rng)
        n = len(ids)
        keyed.extend(((i + 0.5) / n, label, vid) for i, vid in enumerate(ids))
    keyed.sort()
    order = [vid for _, _, vid in keyed]
    single = len(labels) < 2
    if single:
        log.warning("corpus has a single label; triplet loss will be 0 in every batch")
    return BatchPlan([order[i:i + batch_size] for i in range(0, len(order), batch_size)], single)


# ---------------------------------------------------------------------------
# features


class Featurizer:
    """Frame selection + frozen encoding + mean pooling, cached per video."""

    def __init__(self, encoder, preprocess_config: PreprocessConfig, use_temporal_segmentation=True):
        self.encoder = encoder
        if use_temporal_segmentation:
            self.preprocess_config = preprocess_config
        else:
            if isinstance(encoder, FeatureBank):
                raise ValueError("disabling temporal segmentation needs an encoder that can re-encode frames; "
                                 "a feature bank is fixed to its stored segments")
            self.preprocess_config = replace(preprocess_config, n_segments=1,
                                             frames_per_segment=FRAME_BUDGET, allow_any_budget=True)
        self._cache = {}

    def selection(self, track):
        return preprocess(track, self.preprocess_config)

    def pooled(self, manifest) -> np.ndarray:
        rows = []
        for track in manifest.videos:
            if track.video_id not in self._cache:
                H = self.encoder.encode_video(track, self.selection(track))
                self._cache[track.video_id] = mean_pool(H)
            rows.append(self._cache[track.video_id])
        return np.stack(rows)


# ---------------------------------------------------------------------------
# speaker probe


def _fit_softmax(X, y, n_classes, reg):
    n, d = X.shape

    def fg(w):
        W = w.reshape(n_classes, d + 1)
        logits = X @ W[:, :d].T + W[:, d]
        logp = log_softmax(logits, axis=1)
        loss = -logp[np.arange(n), y].mean() + 0.5 * reg * np.sum(W[:, :d] ** 2)
        G = np.exp(logp)
        G[np.arange(n), y] -= 1.0
        G /= n
        grad = np.concatenate([G.T @ X + reg * W[:, :d], G.sum(axis=0)[:, None]], axis=1)
        return loss, grad.ravel()

    res = minimize(fg, np.zeros(n_classes * (d + 1)), jac=True, method="L-BFGS-B", options={"maxiter": 500})
    return res.x.reshape(n_classes, d + 1)


def _whitener(X, rel_eps=1e-6):
    mu = X.mean(axis=0)
    U, S, Vt = np.linalg.svd(X - mu, full_matrices=False)
    keep = S > rel_eps * S[0] if S.size and S[0] > 0 else np.zeros(S.shape, bool)
    scale = np.sqrt(max(X.shape[0] - 1, 1)) / S[keep]
    return mu, Vt[keep].T * scale


def speaker_probe_accuracy(z, speakers, reg=1e-3) -> float | None:
    """Two-fold held-out accuracy (percent) of a fresh linear speaker probe on frozen z.

    Each speaker's videos alternate between the folds in listing order. Features
    are PCA-whitened on the fitting fold, which makes the probe blind to any
    invertible linear rescaling of z; the classifier is L2-regularized
    multinomial logistic regression.
    """
    z = np.asarray(z, dtype=np.float64)
    speakers = np.asarray(speakers, dtype=np.int64)
    classes = np.unique(speakers)
    if classes.size < 2:
        return None
    fold = np.zeros(len(speakers), dtype=np.int64)
    for c in classes:
        idx = np.flatnonzero(speakers == c)
        fold[idx] = np.arange(idx.size) % 2
    y = np.searchsorted(classes, speakers)
    correct = total = 0
    for k in (0, 1):
        tr, te = fold != k, fold == k
        if not tr.any() or not te.any():
            continue
        mu, M = _whitener(z[tr])
        W = _fit_softmax((z[tr] - mu) @ M, y[tr], classes.size, reg)
        pred = np.argmax(((z[te] - mu) @ M) @ W[:, :-1].T + W[:, -1], axis=1)
        correct += int(np.sum(pred == y[te]))
        total += int(te.sum())
    return 100.0 * correct / total if total else None


# ---------------------------------------------------------------------------
# evaluation


def predict(params, pooled, model_config: ModelConfig):
    z, _ = embed(params, pooled, model_config, "eval")
    logit = z @ params["w_cls"] + params["b_cls"][0]
    return expit(logit), z


def evaluate(params, manifest, featurizer: Featurizer, model_config: ModelConfig, probe=True) -> MetricsReport:
    if len(manifest.videos) == 0:
        raise ValueError("empty evaluation set")
    probs, z = predict(params, featurizer.pooled(manifest), model_config)
    report = metrics_report(probs, manifest.labels())
    if probe:
        report.speaker_probe_acc = speaker_probe_accuracy(z, manifest.speaker_classes())
    return report


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    params: dict
    history: list
    model_config: ModelConfig
    final_report: MetricsReport | None = None


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def history_csv(history) -> str:
    buf = io.StringIO()
    buf.write(",".join(HISTORY_FIELDS) + "\n")
    for row in history:
        buf.write(",".join(_fmt(row.get(k)) for k in HISTORY_FIELDS) + "\n")
    return buf.getvalue()


def train(manifest, featurizer: Featurizer, train_config: TrainConfig, model_config: ModelConfig,
          weights: LossWeights = LossWeights(), eval_manifest=None, checkpoint_dir=None, params=None) -> TrainResult:
    """Run the full optimization; returns final parameters and per-epoch history.

    ``model_config.use_reembedding`` is overridden by the train config's
    ablation flag so the two cannot disagree.
    """
    tc = train_config
    model_config = replace(model_config, use_reembedding=tc.use_reembedding)
    if not tc.use_reembedding:
        model_config = replace(model_config, out_dim=model_config.dim)
    enc_dim = getattr(featurizer.encoder, "dim", model_config.dim)
    if enc_dim != model_config.dim:
        raise DimensionMismatchError(f"encoder produces D={enc_dim} but the model is configured for D={model_config.dim}")
    if tc.use_id_loss:
        manifest.require_speakers(2)
    if isinstance(featurizer.encoder, FeatureBank):
        featurizer.encoder.check_complete(manifest)
        if eval_manifest is not None:
            featurizer.encoder.check_complete(eval_manifest)
    w = effective_weights(weights, tc.use_id_loss, tc.use_triplet_loss)

    pooled = featurizer.pooled(manifest)
    row_of = {v.video_id: i for i, v in enumerate(manifest.videos)}
    labels = manifest.labels()
    speakers = manifest.speaker_classes()
    if params is None:
        params = init_params(model_config, manifest.n_speakers, tc.seed)
    state = AdamState()
    history = []
    eval_set = eval_manifest if eval_manifest is not None else manifest
    report = None

    for epoch in range(tc.epochs):
        plan = make_batches(manifest, tc.batch_size, tc.seed, epoch)
        sums = np.zeros(4)
        count = 0
        for b, batch in enumerate(plan):
            idx = np.array([row_of[v] for v in batch])
            bd, grads, _, _ = loss_and_grads(
                params, pooled[idx], labels[idx], speakers[idx], w, model_config,
                mode="train", rng=stream(tc.seed, DROPOUT, epoch, b),
            )
            if not np.isfinite(bd.l_total):
                raise NonFiniteError(f"non-finite loss at epoch {epoch} batch {b} ({batch})")
            adam_step(params, grads, state, tc.learning_rate, tc.weight_decay,
                      tc.adam_beta1, tc.adam_beta2, tc.adam_eps)
            sums += len(batch) * np.array([bd.l_cls, bd.l_id, bd.l_tri, bd.l_total])
            count += len(batch)
        mean = sums / count
        row = dict(zip(("l_cls", "l_id", "l_tri", "l_total"), mean.tolist()), epoch=epoch + 1)
        last = epoch == tc.epochs - 1
        if tc.eval_every and ((epoch + 1) % tc.eval_every == 0 or last):
            report = evaluate(params, eval_set, featurizer, model_config)
            row.update(f1=report.f1, acc=report.acc, auc=report.auc, speaker_probe_acc=report.speaker_probe_acc)
        history.append(row)
        log.info("epoch %d  l_total=%.5f  l_cls=%.5f", epoch + 1, row["l_total"], row["l_cls"])
        if checkpoint_dir is not None and tc.checkpoint_every and ((epoch + 1) % tc.checkpoint_every == 0 or last):
            save_checkpoint(Path(checkpoint_dir) / f"checkpoint-{epoch + 1:05d}.glm", params, model_config)
    return TrainResult(params, history, model_config, report)
