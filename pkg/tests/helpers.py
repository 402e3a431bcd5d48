"""Small fixture builders shared by the test modules."""
import numpy as np

from genlie.cues import GAZE_DIM, VideoCueTrack


def make_track(T=8, A=3, J=2, video_id="v0", speaker_id="s0", label=0, fps=30.0, seed=0,
               au=None, gaze=None, pose=None):
    rng = np.random.default_rng(seed)
    if au is None:
        au = rng.uniform(0.0, 2.0, size=(T, A))
    if gaze is None:
        gaze = rng.normal(size=(T, GAZE_DIM))
    if pose is None:
        pose = rng.uniform(0.0, 1.0, size=(T, J, 2))
    return VideoCueTrack(video_id=video_id, speaker_id=speaker_id, label=label, fps=fps,
                         au=au, gaze=gaze, pose=pose)


def finite_difference(f, x, h=1e-5):
    """Central differences of scalar ``f`` with respect to array ``x`` (modified in place)."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)))
