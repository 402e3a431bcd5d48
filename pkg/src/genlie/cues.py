"""Per-frame behavioral cue tracks and corpus manifests.

Track file layout (UTF-8, ``\\n`` line endings)::

    #genlie-cues video_id=<id> speaker_id=<id> label=<0|1> fps=<float> A=<int> J=<int>
    <frame_index>\\t<au_1,...,au_A>\\t<gaze_1,...,gaze_36>\\t<x_1,y_1,...,x_J,y_J>
    ...

Decimals are written with Python's shortest round-trip ``repr``; parsing then
re-serializing a file in that canonical form reproduces it byte for byte.
"""
from __future__ import annotations

import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GAZE_DIM = 36
AU_MAX = 5.0
TRACK_MAGIC = "#genlie-cues"
MANIFEST_FORMAT = "genlie-manifest/1"


class CueError(ValueError):
    """Base class for cue/manifest validation failures."""


class CueParseError(CueError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class CueSchemaError(CueError):
    pass


class EmptyInputError(CueError):
    pass


class ManifestError(CueError):
    pass


@dataclass(frozen=True)
class FrameCueRecord:
    frame_index: int
    au_intensities: np.ndarray
    gaze_descriptor: np.ndarray
    pose_keypoints: np.ndarray  # (J, 2)


@dataclass(frozen=True, eq=False)
class VideoCueTrack:
    """One video's cue time series.

    Cues are held as dense arrays: ``au`` (T, A), ``gaze`` (T, 36) and
    ``pose`` (T, J, 2). Arrays are made read-only on construction.
    """

    video_id: str
    speaker_id: str
    label: int
    fps: float
    au: np.ndarray
    gaze: np.ndarray
    pose: np.ndarray

    def __post_init__(self):
        au = np.array(self.au, dtype=np.float64, ndmin=2)
        gaze = np.array(self.gaze, dtype=np.float64, ndmin=2)
        pose = np.array(self.pose, dtype=np.float64)
        if pose.ndim == 2:
            pose = pose.reshape(pose.shape[0], -1, 2)
        T = au.shape[0]
        if T < 1:
            raise EmptyInputError(f"{self.video_id}: track has no frames")
        if gaze.shape != (T, GAZE_DIM):
            raise CueSchemaError(f"{self.video_id}: gaze must be (T, {GAZE_DIM}), got {gaze.shape}")
        if pose.ndim != 3 or pose.shape[0] != T or pose.shape[2] != 2:
            raise CueSchemaError(f"{self.video_id}: pose must be (T, J, 2), got {pose.shape}")
        if self.label not in (0, 1):
            raise CueSchemaError(f"{self.video_id}: label must be 0 or 1, got {self.label!r}")
        if not (self.fps > 0 and np.isfinite(self.fps)):
            raise CueSchemaError(f"{self.video_id}: fps must be > 0, got {self.fps!r}")
        for ident in (self.video_id, self.speaker_id):
            if not ident or any(c.isspace() or c == "=" for c in ident):
                raise CueSchemaError(f"identifier {ident!r} must be non-empty without whitespace or '='")
        _check_au(au, self.video_id)
        for name, arr in (("gaze", gaze), ("pose", pose)):
            if not np.all(np.isfinite(arr)):
                raise CueSchemaError(f"{self.video_id}: non-finite {name} value")
        for arr in (au, gaze, pose):
            arr.flags.writeable = False
        object.__setattr__(self, "au", au)
        object.__setattr__(self, "gaze", gaze)
        object.__setattr__(self, "pose", pose)
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def n_frames(self) -> int:
        return self.au.shape[0]

    @property
    def au_count(self) -> int:
        return self.au.shape[1]

    @property
    def keypoint_count(self) -> int:
        return self.pose.shape[1]

    def frame(self, t: int) -> FrameCueRecord:
        return FrameCueRecord(t, self.au[t], self.gaze[t], self.pose[t])

    def frames(self):
        return [self.frame(t) for t in range(self.n_frames)]


def _check_au(au, video_id, line=None):
    if not np.all(np.isfinite(au)):
        raise CueSchemaError(_where(video_id, line) + "non-finite AU intensity")
    if np.any(au < 0) or np.any(au > AU_MAX):
        bad = au[(au < 0) | (au > AU_MAX)].flat[0]
        raise CueSchemaError(_where(video_id, line) + f"AU intensity {bad!r} outside [0, {AU_MAX}]")


def _where(video_id, line):
    return f"{video_id} line {line}: " if line is not None else f"{video_id}: "


# ---------------------------------------------------------------------------
# track text format


def _parse_header(line: str) -> dict:
    parts = line.split()
    if not parts or parts[0] != TRACK_MAGIC:
        raise CueParseError(f"expected header starting with {TRACK_MAGIC!r}", 1)
    fields = {}
    for tok in parts[1:]:
        key, sep, val = tok.partition("=")
        if not sep:
            raise CueParseError(f"header token {tok!r} is not key=value", 1)
        fields[key] = val
    need = ("video_id", "speaker_id", "label", "fps", "A", "J")
    missing = [k for k in need if k not in fields]
    if missing:
        raise CueParseError(f"header missing {', '.join(missing)}", 1)
    extra = sorted(set(fields) - set(need))
    if extra:
        raise CueParseError(f"unknown header keys {extra}", 1)
    try:
        return {
            "video_id": fields["video_id"],
            "speaker_id": fields["speaker_id"],
            "label": int(fields["label"]),
            "fps": float(fields["fps"]),
            "A": int(fields["A"]),
            "J": int(fields["J"]),
        }
    except ValueError as exc:
        raise CueParseError(f"bad header value: {exc}", 1) from None


def _floats(text, lineno, name):
    try:
        return [float(x) for x in text.split(",")] if text else []
    except ValueError:
        raise CueParseError(f"field {name!r} is not a comma-separated list of decimals", lineno) from None


def parse_cue_track(stream) -> VideoCueTrack:
    """Parse a cue track from bytes, text, or a binary/text file object."""
    if isinstance(stream, (bytes, bytearray)):
        text = bytes(stream).decode("utf-8")
    elif isinstance(stream, str):
        text = stream
    else:
        data = stream.read()
        text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not any(l.strip() for l in lines):
        raise EmptyInputError("empty cue stream")
    head = _parse_header(lines[0])
    A, J = head["A"], head["J"]
    if A < 1 or J < 1:
        raise CueSchemaError(f"A and J must be >= 1, got A={A} J={J}")
    T = len(lines) - 1
    if T == 0:
        raise EmptyInputError(f"{head['video_id']}: header but no frame lines")
    au = np.empty((T, A))
    gaze = np.empty((T, GAZE_DIM))
    pose = np.empty((T, 2 * J))
    for row, line in enumerate(lines[1:]):
        lineno = row + 2
        cols = line.split("\t")
        if len(cols) != 4:
            raise CueParseError(f"expected 4 tab-separated fields, got {len(cols)}", lineno)
        try:
            idx = int(cols[0])
        except ValueError:
            raise CueParseError(f"frame_index {cols[0]!r} is not an integer", lineno) from None
        if idx != row:
            raise CueSchemaError(
                f"{head['video_id']} line {lineno}: frame_index {idx} breaks contiguity (expected {row})"
            )
        for name, col, width, dest in (
            ("au", cols[1], A, au),
            ("gaze", cols[2], GAZE_DIM, gaze),
            ("pose", cols[3], 2 * J, pose),
        ):
            vals = _floats(col, lineno, name)
            if len(vals) != width:
                raise CueSchemaError(
                    f"{head['video_id']} line {lineno}: field {name!r} has length {len(vals)}, expected {width}"
                )
            dest[row] = vals
        _check_au(au[row], head["video_id"], lineno)
    return VideoCueTrack(
        video_id=head["video_id"],
        speaker_id=head["speaker_id"],
        label=head["label"],
        fps=head["fps"],
        au=au,
        gaze=gaze,
        pose=pose.reshape(T, J, 2),
    )


def _fmt(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def serialize_cue_track(track: VideoCueTrack) -> bytes:
    buf = io.StringIO()
    buf.write(
        f"{TRACK_MAGIC} video_id={track.video_id} speaker_id={track.speaker_id} "
        f"label={track.label} fps={track.fps!r} A={track.au_count} J={track.keypoint_count}\n"
    )
    pose = track.pose.reshape(track.n_frames, -1)
    for t in range(track.n_frames):
        buf.write(f"{t}\t{_fmt(track.au[t])}\t{_fmt(track.gaze[t])}\t{_fmt(pose[t])}\n")
    return buf.getvalue().encode("utf-8")


def read_cue_track(path) -> VideoCueTrack:
    with open(path, "rb") as fh:
        return parse_cue_track(fh)


def write_cue_track(track: VideoCueTrack, path) -> None:
    Path(path).write_bytes(serialize_cue_track(track))


# ---------------------------------------------------------------------------
# manifest


@dataclass
class CorpusManifest:
    """A corpus of tracks plus the speaker-class mapping.

    ``speaker_index`` is assigned by sorted speaker_id, so it does not depend
    on the order videos are listed in.
    """

    videos: list
    au_count: int
    keypoint_count: int
    speaker_index: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for v in self.videos:
            if v.video_id in seen:
                raise ManifestError(f"duplicate video_id {v.video_id!r}")
            seen.add(v.video_id)
            if v.au_count != self.au_count or v.keypoint_count != self.keypoint_count:
                raise CueSchemaError(
                    f"{v.video_id}: cue lengths A={v.au_count}, J={v.keypoint_count} differ from "
                    f"corpus A={self.au_count}, J={self.keypoint_count}"
                )
        speakers = sorted({v.speaker_id for v in self.videos})
        self.speaker_index = {s: i for i, s in enumerate(speakers)}

    @property
    def n_speakers(self) -> int:
        return len(self.speaker_index)

    def __len__(self):
        return len(self.videos)

    def by_id(self) -> dict:
        return {v.video_id: v for v in self.videos}

    def labels(self) -> np.ndarray:
        return np.array([v.label for v in self.videos], dtype=np.int64)

    def speaker_classes(self) -> np.ndarray:
        return np.array([self.speaker_index[v.speaker_id] for v in self.videos], dtype=np.int64)

    def subset(self, video_ids) -> "CorpusManifest":
        """Manifest restricted to ``video_ids`` (speaker classes re-derived)."""
        lookup = self.by_id()
        vids = [lookup[i] for i in video_ids]
        return CorpusManifest(vids, self.au_count, self.keypoint_count,
                              paths={i: self.paths[i] for i in video_ids if i in self.paths})

    def require_speakers(self, minimum=2):
        if self.n_speakers < minimum:
            raise ManifestError(
                f"speaker head needs at least {minimum} speaker identities, corpus has {self.n_speakers}"
            )


def load_manifest(path, max_workers=None) -> CorpusManifest:
    """Load a JSON manifest and every track it references.

    Track paths are resolved relative to the manifest's directory.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from None
    if doc.get("format") != MANIFEST_FORMAT:
        raise ManifestError(f"{path}: format must be {MANIFEST_FORMAT!r}")
    unknown = set(doc) - {"format", "au_count", "keypoint_count", "videos"}
    if unknown:
        raise ManifestError(f"{path}: unknown keys {sorted(unknown)}")
    try:
        A, J, entries = int(doc["au_count"]), int(doc["keypoint_count"]), doc["videos"]
    except KeyError as exc:
        raise ManifestError(f"{path}: missing key {exc}") from None
    ids = [e["video_id"] for e in entries]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise ManifestError(f"duplicate video_id {dup[0]!r}")
    base = path.parent
    track_paths = [base / e["path"] for e in entries]

    def _load(p):
        try:
            return read_cue_track(p)
        except OSError:
            raise ManifestError(f"unreadable track file: {p}") from None

    with ThreadPoolExecutor(max_workers=max_workers or min(8, os.cpu_count() or 1)) as pool:
        tracks = list(pool.map(_load, track_paths))
    for e, t in zip(entries, tracks):
        if t.video_id != e["video_id"]:
            raise ManifestError(f"manifest lists {e['video_id']!r} but track header says {t.video_id!r}")
    return CorpusManifest(tracks, A, J, paths={e["video_id"]: str(p) for e, p in zip(entries, track_paths)})


def write_manifest(manifest: CorpusManifest, directory, name="manifest.json", track_dir="tracks") -> Path:
    """Write the manifest and one track file per video under ``directory``."""
    directory = Path(directory)
    (directory / track_dir).mkdir(parents=True, exist_ok=True)
    entries = []
    for v in manifest.videos:
        rel = f"{track_dir}/{v.video_id}.cues"
        write_cue_track(v, directory / rel)
        entries.append({"video_id": v.video_id, "path": rel})
    doc = {
        "format": MANIFEST_FORMAT,
        "au_count": manifest.au_count,
        "keypoint_count": manifest.keypoint_count,
        "videos": entries,
    }
    out = directory / name
    out.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return out
