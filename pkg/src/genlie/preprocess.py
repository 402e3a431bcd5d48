"""Temporal segmentation and per-segment frame selection."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import kernels

FRAME_BUDGET = 128


class Strategy(str, enum.Enum):
    UNIFORM = "uniform"
    AU = "au"
    MICRO_EXPRESSION = "micro_expression"
    GAZE = "gaze"
    POSTURE = "posture"
    FUSION = "fusion"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"micro": "micro_expression", "microexpression": "micro_expression", "micro_exp": "micro_expression"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown strategy {value!r}; choose from {[s.value for s in cls]}") from None


@dataclass(frozen=True)
class PreprocessConfig:
    n_segments: int = 8
    frames_per_segment: int = 16
    strategy: Strategy = Strategy.UNIFORM
    au_active_threshold: float = 1.0
    micro_expression_max_duration: float = 0.5
    allow_any_budget: bool = False

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        if self.n_segments < 1 or self.frames_per_segment < 1:
            raise ValueError("n_segments and frames_per_segment must be >= 1")
        if not self.allow_any_budget and self.budget != FRAME_BUDGET:
            raise ValueError(
                f"n_segments x frames_per_segment must equal {FRAME_BUDGET}, "
                f"got {self.n_segments} x {self.frames_per_segment}"
            )
        if self.micro_expression_max_duration <= 0:
            raise ValueError("micro_expression_max_duration must be > 0")

    @property
    def budget(self) -> int:
        return self.n_segments * self.frames_per_segment


@dataclass
class SegmentSelection:
    video_id: str
    strategy: Strategy
    segments: list
    ranges: list
    scores: np.ndarray | None = field(default=None, repr=False)

    @property
    def indices(self) -> np.ndarray:
        """All selected frames in temporal order."""
        if not self.segments:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([np.asarray(s, dtype=np.int64) for s in self.segments])

    @property
    def total(self) -> int:
        return sum(len(s) for s in self.segments)

    def to_record(self, config: PreprocessConfig | None = None) -> dict:
        rec = {
            "video_id": self.video_id,
            "strategy": self.strategy.value,
            "segments": [[int(i) for i in s] for s in self.segments],
            "scores": None if self.scores is None else [float(x) for x in self.scores],
        }
        if config is not None:
            rec["n_segments"] = config.n_segments
            rec["frames_per_segment"] = config.frames_per_segment
        return rec


def segment_ranges(T: int, N: int) -> list:
    """Split ``[0, T)`` into ``N`` half-open ranges; earlier ranges take the remainder."""
    if T < 1:
        raise ValueError("empty video: T must be >= 1")
    if N < 1:
        raise ValueError("N must be >= 1")
    base, extra = divmod(T, N)
    out, start = [], 0
    for i in range(N):
        stop = start + base + (1 if i < extra else 0)
        out.append((start, stop))
        start = stop
    return out


# ---------------------------------------------------------------------------
# scoring


def score_au(track) -> np.ndarray:
    return track.au.sum(axis=1)


def score_micro_expression(track, threshold=1.0, max_duration=0.5) -> np.ndarray:
    if track.fps <= 0:
        raise ValueError("fps must be > 0")
    active = track.au >= threshold
    return kernels.transient_counts(active, track.fps, max_duration).astype(np.float64)


def score_gaze(track) -> np.ndarray:
    centered = track.gaze - track.gaze.mean(axis=0)
    return np.sqrt((centered * centered).sum(axis=1))


def score_posture(track) -> np.ndarray:
    out = np.zeros(track.n_frames)
    if track.n_frames > 1:
        step = np.diff(track.pose, axis=0)
        out[1:] = np.sqrt((step * step).sum(axis=2)).sum(axis=1)
    return out


def _minmax(x):
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def fuse_scores(au, micro, gaze, posture) -> np.ndarray:
    vecs = [np.asarray(v, dtype=np.float64) for v in (au, micro, gaze, posture)]
    if len({v.shape for v in vecs}) != 1 or vecs[0].ndim != 1:
        raise ValueError(f"score vectors must share one length, got {[v.shape for v in vecs]}")
    return sum(_minmax(v) for v in vecs) / 4.0


def frame_scores(track, config: PreprocessConfig):
    s = config.strategy
    if s is Strategy.UNIFORM:
        return None
    if s is Strategy.AU:
        return score_au(track)
    if s is Strategy.MICRO_EXPRESSION:
        return score_micro_expression(track, config.au_active_threshold, config.micro_expression_max_duration)
    if s is Strategy.GAZE:
        return score_gaze(track)
    if s is Strategy.POSTURE:
        return score_posture(track)
    return fuse_scores(
        score_au(track),
        score_micro_expression(track, config.au_active_threshold, config.micro_expression_max_duration),
        score_gaze(track),
        score_posture(track),
    )


# ---------------------------------------------------------------------------
# selection


def select_top_k(scores, ranges, K, video_id="", strategy=Strategy.AU) -> SegmentSelection:
    """Per range, keep the K highest scores (lower index wins ties), in temporal order."""
    scores = np.asarray(scores, dtype=np.float64)
    segments = []
    for start, stop in ranges:
        local = scores[start:stop]
        # stable sort on -score keeps lower frame index first among ties
        order = np.argsort(-local, kind="stable")[:K]
        segments.append(np.sort(order) + start)
    return SegmentSelection(video_id, Strategy.parse(strategy), segments, list(ranges), scores)


def select_uniform(rng_range, K) -> np.ndarray:
    start, stop = rng_range
    L = stop - start
    if L <= 0:
        return np.zeros(0, dtype=np.int64)
    if K == 1:
        return np.array([start + (L - 1) // 2], dtype=np.int64)
    offsets = np.floor(np.arange(K) * (L - 1) / (K - 1) + 0.5).astype(np.int64)
    return start + np.unique(offsets)


def preprocess(track, config: PreprocessConfig) -> SegmentSelection:
    T = track.n_frames
    ranges = segment_ranges(T, config.n_segments)
    if T < config.budget:
        segs = [np.arange(a, b, dtype=np.int64) for a, b in ranges]
        scores = frame_scores(track, config)
        return SegmentSelection(track.video_id, config.strategy, segs, ranges, scores)
    K = config.frames_per_segment
    if config.strategy is Strategy.UNIFORM:
        segs = [select_uniform(r, K) for r in ranges]
        return SegmentSelection(track.video_id, config.strategy, segs, ranges, None)
    return select_top_k(frame_scores(track, config), ranges, K, track.video_id, config.strategy)
