"""Positive-class F1, accuracy and Mann-Whitney AUC, all in percent."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import kernels


class UndefinedAUCError(ValueError):
    """AUC needs at least one positive and one negative sample."""


@dataclass
class MetricsReport:
    f1: float
    acc: float
    auc: float | None
    tp: int
    fp: int
    tn: int
    fn: int
    n_pos: int
    n_neg: int
    speaker_probe_acc: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        def fmt(v):
            return "n/a" if v is None else f"{v:.2f}"

        rows = [
            ("F1", fmt(self.f1)),
            ("ACC", fmt(self.acc)),
            ("AUC", fmt(self.auc)),
            ("speaker probe ACC", fmt(self.speaker_probe_acc)),
            ("tp/fp/tn/fn", f"{self.tp}/{self.fp}/{self.tn}/{self.fn}"),
        ]
        w = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{w}}  {v:>12}" for k, v in rows)


def _binary(predictions, labels):
    p = np.asarray(predictions).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if p.shape != y.shape:
        raise ValueError(f"predictions and labels differ in length ({p.size} vs {y.size})")
    if p.size == 0:
        raise ValueError("empty input")
    for name, v in (("predictions", p), ("labels", y)):
        if not np.all((v == 0) | (v == 1)):
            raise ValueError(f"{name} must be 0/1")
    return p.astype(bool), y.astype(bool)


def confusion(predictions, labels):
    p, y = _binary(predictions, labels)
    tp = int(np.sum(p & y))
    fp = int(np.sum(p & ~y))
    tn = int(np.sum(~p & ~y))
    fn = int(np.sum(~p & y))
    return tp, fp, tn, fn


def f1_positive(predictions, labels) -> float:
    tp, fp, _, fn = confusion(predictions, labels)
    if tp + fp == 0 or tp + fn == 0 or tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 100.0 * 2.0 * precision * recall / (precision + recall)


def accuracy(predictions, labels) -> float:
    p, y = _binary(predictions, labels)
    return 100.0 * int(np.sum(p == y)) / p.size


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with half credit for ties, via average ranks."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError(f"AUC undefined with {n_pos} positive and {n_neg} negative samples")
    ranks = kernels.average_ranks(s)
    # rank sums are exact multiples of 0.5, so u equals the pair count exactly
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return 100.0 * u / (n_pos * n_neg)


def metrics_report(probs, labels, threshold=0.5) -> MetricsReport:
    probs = np.asarray(probs, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(np.int64)
    pred = (probs >= threshold).astype(np.int64)
    tp, fp, tn, fn = confusion(pred, y)
    try:
        a = auc(probs, y)
    except UndefinedAUCError:
        a = None
    return MetricsReport(
        f1=f1_positive(pred, y), acc=accuracy(pred, y), auc=a,
        tp=tp, fp=fp, tn=tn, fn=fn, n_pos=int(y.sum()), n_neg=int(y.size - y.sum()),
    )
