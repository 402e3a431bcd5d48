"""Synthetic cue corpora with planted AU bursts and speaker-identity confounds.

Deceptive videos get short bursts added to every AU channel. Each speaker
carries a persistent offset on a rho-fraction of the gaze/pose channels;
the synthetic encoder's mean summary turns that into a fixed per-speaker
shift of the segment features, which is what the speaker head can exploit.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cues import GAZE_DIM, CorpusManifest, VideoCueTrack, write_manifest
from .rng import SYNTH, stream

_CORPUS = 1_000_000  # stream index reserved for corpus-level draws


@dataclass(frozen=True)
class SynthConfig:
    n_speakers: int = 4
    videos_per_speaker: int = 4
    frames_per_video: int = 256
    deception_rate: float = 0.5
    cue_burst_strength: float = 2.0
    burst_length_frames: int = 6
    n_bursts: int = 2
    identity_confound: float = 0.5
    noise_std: float = 0.2
    speaker_offset_scale: float = 1.0
    au_count: int = 17
    keypoint_count: int = 5
    fps: float = 30.0
    au_baseline: float = 0.5
    pose_jitter: float = 0.005
    seed: int = 42

    def __post_init__(self):
        for name in ("n_speakers", "videos_per_speaker", "frames_per_video", "burst_length_frames",
                     "n_bursts", "au_count", "keypoint_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 < self.deception_rate < 1.0:
            raise ValueError("deception_rate must lie in (0, 1)")
        if not 0.0 <= self.identity_confound <= 1.0:
            raise ValueError("identity_confound must lie in [0, 1]")
        for name in ("cue_burst_strength", "noise_std", "speaker_offset_scale", "pose_jitter"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.fps <= 0:
            raise ValueError("fps must be > 0")
        if 3 * self.burst_length_frames > self.frames_per_video:
            raise ValueError(
                f"burst of {self.burst_length_frames} frames does not fit a {self.frames_per_video}-frame video "
                "with edge margins (need frames_per_video >= 3 * burst_length_frames)"
            )


@dataclass
class SynthCorpus:
    manifest: CorpusManifest
    bursts: dict  # video_id -> sorted burst frame indices
    config: SynthConfig
    confound_channels: np.ndarray = field(repr=False, default=None)
    speaker_offsets: dict = field(repr=False, default_factory=dict)


def _speaker_id(i):
    return f"spk{i:03d}"


def generate_corpus(config: SynthConfig) -> SynthCorpus:
    cfg = config
    J, A, L = cfg.keypoint_count, cfg.au_count, cfg.burst_length_frames
    T = cfg.frames_per_video
    n_channels = GAZE_DIM + 2 * J
    corpus_rng = stream(cfg.seed, SYNTH, _CORPUS)
    n_conf = int(round(cfg.identity_confound * n_channels))
    conf = np.sort(corpus_rng.permutation(n_channels)[:n_conf])
    pose_home = corpus_rng.uniform(0.3, 0.7, size=(J, 2))
    offsets = {}
    for s in range(cfg.n_speakers):
        vec = np.zeros(n_channels)
        vec[conf] = corpus_rng.normal(0.0, cfg.speaker_offset_scale, size=n_conf)
        # pose lives in [0, 1]; shrink its share of the offset
        vec[GAZE_DIM:] *= 0.1
        offsets[_speaker_id(s)] = vec

    videos, bursts = [], {}
    for s in range(cfg.n_speakers):
        spk = _speaker_id(s)
        label_rng = stream(cfg.seed, SYNTH, _CORPUS, s)
        n_dec = int(np.floor(cfg.deception_rate * cfg.videos_per_speaker + label_rng.random()))
        deceptive = set(label_rng.permutation(cfg.videos_per_speaker)[:n_dec].tolist())
        for v in range(cfg.videos_per_speaker):
            rng = stream(cfg.seed, SYNTH, s, v)
            vid = f"{spk}_v{v:03d}"
            label = int(v in deceptive)
            au = cfg.au_baseline + cfg.noise_std * rng.standard_normal((T, A))
            gaze = cfg.noise_std * rng.standard_normal((T, GAZE_DIM)) + offsets[spk][:GAZE_DIM]
            pose = (pose_home + offsets[spk][GAZE_DIM:].reshape(J, 2))[None] + cfg.pose_jitter * rng.standard_normal((T, J, 2))
            frames = np.zeros(0, dtype=np.int64)
            if label:
                starts = rng.integers(L, T - 2 * L + 1, size=cfg.n_bursts)
                frames = np.unique(np.concatenate([np.arange(a, a + L) for a in starts]))
                au[frames] += cfg.cue_burst_strength
            bursts[vid] = frames
            videos.append(VideoCueTrack(
                video_id=vid, speaker_id=spk, label=label, fps=cfg.fps,
                au=np.clip(au, 0.0, 5.0), gaze=gaze, pose=np.clip(pose, 0.0, 1.0),
            ))
    manifest = CorpusManifest(videos, A, J)
    return SynthCorpus(manifest, bursts, cfg, conf, offsets)


def selection_hit_rate(selection, bursts) -> float:
    """Fraction of planted burst frames present in ``selection``.

    ``bursts`` is either a ``{video_id: frames}`` map or a ``(video_id, frames)``
    pair. Returns NaN for a video without bursts.
    """
    if isinstance(bursts, dict):
        if selection.video_id not in bursts:
            raise KeyError(f"no ground truth for video {selection.video_id!r}")
        frames = bursts[selection.video_id]
    else:
        vid, frames = bursts
        if vid != selection.video_id:
            raise ValueError(f"selection is for {selection.video_id!r}, ground truth for {vid!r}")
    frames = np.asarray(frames, dtype=np.int64)
    if frames.size == 0:
        return float("nan")
    return float(np.isin(frames, selection.indices).mean())


def write_corpus(corpus: SynthCorpus, directory) -> dict:
    """Write manifest, track files and ground truth; returns the written paths."""
    directory = Path(directory)
    manifest_path = write_manifest(corpus.manifest, directory)
    truth = {
        "config": asdict(corpus.config),
        "confound_channels": [int(c) for c in corpus.confound_channels],
        "bursts": {vid: [int(f) for f in fr] for vid, fr in sorted(corpus.bursts.items())},
    }
    truth_path = directory / "ground_truth.json"
    truth_path.write_text(json.dumps(truth, indent=1) + "\n", encoding="utf-8")
    return {"manifest": manifest_path, "ground_truth": truth_path}


def load_ground_truth(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return {vid: np.asarray(fr, dtype=np.int64) for vid, fr in doc["bursts"].items()}
