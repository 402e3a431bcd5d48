"""Frozen segment encoders: a file-backed feature bank and a seeded synthetic stand-in.

Both expose ``encode_video(track, selection) -> (n, D)`` returning one row
per non-empty segment. Neither holds trainable state.
"""
from __future__ import annotations

import functools
import struct
from pathlib import Path

import numpy as np

from .rng import ENCODER, stream

BANK_MAGIC = b"GLF1"
_HEADER = struct.Struct("<4sII")


class EncoderError(ValueError):
    pass


class FeatureLookupError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DimensionMismatchError(EncoderError):
    pass


# ---------------------------------------------------------------------------
# synthetic encoder


def summary_vector(au, gaze, pose) -> np.ndarray:
    """Means then population standard deviations of every cue channel."""
    cues = np.concatenate(
        [np.asarray(au, np.float64), np.asarray(gaze, np.float64), np.asarray(pose, np.float64).reshape(len(au), -1)],
        axis=1,
    )
    return np.concatenate([cues.mean(axis=0), cues.std(axis=0)])


@functools.lru_cache(maxsize=16)
def projection_matrix(seed: int, dim: int, summary_dim: int) -> np.ndarray:
    rng = stream(seed, ENCODER)
    P = rng.standard_normal((dim, summary_dim)) / np.sqrt(summary_dim)
    P.flags.writeable = False
    return P


def encode_synthetic(frames, seed: int, dim: int) -> np.ndarray:
    """Encode a list of FrameCueRecord (the selected frames of one segment)."""
    if len(frames) == 0:
        raise EncoderError("cannot encode an empty frame set")
    au = np.stack([f.au_intensities for f in frames])
    gaze = np.stack([f.gaze_descriptor for f in frames])
    pose = np.stack([f.pose_keypoints for f in frames])
    s = summary_vector(au, gaze, pose)
    return projection_matrix(int(seed), int(dim), s.size) @ s


class SyntheticEncoder:
    def __init__(self, seed: int = 42, dim: int = 768):
        if dim < 1:
            raise EncoderError("dim must be >= 1")
        self.seed = int(seed)
        self.dim = int(dim)

    def encode_segment(self, track, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            raise EncoderError(f"{track.video_id}: empty segment")
        s = summary_vector(track.au[idx], track.gaze[idx], track.pose[idx])
        return projection_matrix(self.seed, self.dim, s.size) @ s

    def encode_video(self, track, selection) -> np.ndarray:
        rows = [self.encode_segment(track, seg) for seg in selection.segments if len(seg)]
        return np.stack(rows)

    def describe(self) -> dict:
        return {"kind": "synthetic", "seed": self.seed, "dim": self.dim}


# ---------------------------------------------------------------------------
# feature bank


class FeatureBank:
    """Read-only map ``(video_id, segment_index) -> float32 vector``."""

    def __init__(self, entries: dict, dim: int):
        self.dim = int(dim)
        self._entries = {}
        for key, vec in entries.items():
            arr = np.array(vec, dtype="<f4")
            if arr.shape != (self.dim,):
                raise DimensionMismatchError(f"entry {key} has shape {arr.shape}, bank dimension is {self.dim}")
            if not np.all(np.isfinite(arr)):
                raise EncoderError(f"entry {key} has non-finite values")
            arr.flags.writeable = False
            self._entries[(str(key[0]), int(key[1]))] = arr
        self._segments = {}
        for vid, seg in self._entries:
            self._segments[vid] = max(self._segments.get(vid, -1), seg)
        for vid, last in self._segments.items():
            for i in range(last + 1):
                if (vid, i) not in self._entries:
                    raise EncoderError(f"bank is missing segment {i} of video {vid!r}")

    def __len__(self):
        return len(self._entries)

    def keys(self):
        return self._entries.keys()

    def n_segments(self, video_id) -> int:
        return self._segments.get(video_id, -1) + 1

    def encode_from_bank(self, video_id, segment_index) -> np.ndarray:
        try:
            return self._entries[(video_id, int(segment_index))]
        except KeyError:
            raise FeatureLookupError(f"no feature for (video_id={video_id!r}, segment_index={segment_index})") from None

    def encode_video(self, track, selection=None) -> np.ndarray:
        n = self.n_segments(track.video_id)
        if n <= 0:
            raise FeatureLookupError(f"no feature for (video_id={track.video_id!r}, segment_index=0)")
        if selection is not None:
            expected = sum(1 for s in selection.segments if len(s))
            if expected != n:
                raise EncoderError(
                    f"{track.video_id}: bank holds {n} segments but the selection has {expected} non-empty segments"
                )
        return np.stack([self.encode_from_bank(track.video_id, i) for i in range(n)]).astype(np.float64)

    def check_complete(self, manifest):
        missing = [v.video_id for v in manifest.videos if self.n_segments(v.video_id) <= 0]
        if missing:
            raise FeatureLookupError(f"feature bank has no entries for {len(missing)} video(s), first {missing[0]!r}")

    def describe(self) -> dict:
        return {"kind": "bank", "dim": self.dim, "entries": len(self)}

    # -- file format ---------------------------------------------------------

    def to_bytes(self) -> bytes:
        parts = [_HEADER.pack(BANK_MAGIC, self.dim, len(self._entries))]
        for (vid, seg) in sorted(self._entries):
            raw = vid.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)))
            parts.append(raw)
            parts.append(struct.pack("<I", seg))
            parts.append(self._entries[(vid, seg)].astype("<f4").tobytes())
        return b"".join(parts)

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes, expected_dim=None) -> "FeatureBank":
        if len(data) < _HEADER.size:
            raise EncoderError("feature bank truncated before header")
        magic, dim, count = _HEADER.unpack_from(data, 0)
        if magic != BANK_MAGIC:
            raise EncoderError(f"bad feature bank magic {magic!r}")
        if expected_dim is not None and dim != expected_dim:
            raise DimensionMismatchError(f"feature bank dimension {dim} does not match configured D={expected_dim}")
        off = _HEADER.size
        entries = {}
        for _ in range(count):
            try:
                (n,) = struct.unpack_from("<H", data, off)
                off += 2
                vid = data[off:off + n].decode("utf-8")
                off += n
                (seg,) = struct.unpack_from("<I", data, off)
                off += 4
                if off + 4 * dim > len(data):
                    raise struct.error("short vector")
                vec = np.frombuffer(data, dtype="<f4", count=dim, offset=off)
                off += 4 * dim
            except struct.error:
                raise EncoderError("feature bank truncated inside an entry") from None
            if (vid, seg) in entries:
                raise EncoderError(f"duplicate bank entry ({vid!r}, {seg})")
            entries[(vid, seg)] = vec
        if off != len(data):
            raise EncoderError(f"{len(data) - off} trailing bytes after {count} bank entries")
        return cls(entries, dim)


def load_feature_bank(path, expected_dim=None) -> FeatureBank:
    try:
        data = Path(path).read_bytes()
    except OSError:
        raise EncoderError(f"cannot read feature bank: {path}") from None
    return FeatureBank.from_bytes(data, expected_dim)


def build_feature_bank(manifest, selections, encoder) -> FeatureBank:
    """Materialize ``encoder`` outputs for every video into a bank."""
    by_id = manifest.by_id()
    entries = {}
    for sel in selections:
        H = encoder.encode_video(by_id[sel.video_id], sel)
        for i, row in enumerate(H):
            entries[(sel.video_id, i)] = row
    return FeatureBank(entries, encoder.dim)
