import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genlie.preprocess import (
    PreprocessConfig, Strategy, fuse_scores, preprocess, score_au, score_gaze,
    score_micro_expression, score_posture, segment_ranges, select_top_k, select_uniform,
)
from helpers import make_track


@pytest.mark.parametrize("T,N,want", [
    (128, 8, [(i * 16, i * 16 + 16) for i in range(8)]),
    (10, 3, [(0, 4), (4, 7), (7, 10)]),
    (2, 3, [(0, 1), (1, 2), (2, 2)]),
])
def test_segment_ranges(T, N, want):
    assert segment_ranges(T, N) == want


def test_segment_ranges_empty_video():
    with pytest.raises(ValueError):
        segment_ranges(0, 4)


def test_au_scores():
    t = make_track(T=2, A=2, au=[[0.5, 1.5], [0.0, 3.0]])
    np.testing.assert_array_equal(score_au(t), [2.0, 3.0])
    assert not score_au(make_track(T=4, A=2, au=np.zeros((4, 2)))).any()
    t = make_track(T=2, A=2, au=[[1, 0], [0, 3]])
    sel = select_top_k(score_au(t), [(0, 2)], 1)
    assert sel.segments[0].tolist() == [1]


def test_micro_expression_short_episode():
    au = np.zeros((40, 2))
    au[10:12, 0] = 2.0
    s = score_micro_expression(make_track(T=40, A=2, au=au), threshold=1.0, max_duration=0.5)
    want = np.zeros(40)
    want[10:12] = 1
    np.testing.assert_array_equal(s, want)


def test_micro_expression_long_episode_scores_zero():
    au = np.zeros((40, 2))
    au[5:25, 1] = 2.0  # 20 frames at 30 fps = 0.667 s
    assert not score_micro_expression(make_track(T=40, A=2, au=au)).any()


def test_micro_expression_counts_channels():
    au = np.zeros((20, 3))
    au[3:5, 0] = 1.0
    au[4:6, 2] = 4.0
    au[:, 1] = 2.0  # always active, too long
    s = score_micro_expression(make_track(T=20, A=3, au=au))
    assert s[3] == 1 and s[4] == 2 and s[5] == 1 and s[6] == 0


def test_micro_expression_never_active():
    assert not score_micro_expression(make_track(T=10, A=2, au=np.full((10, 2), 0.2))).any()


def test_gaze_scores():
    g = np.tile(np.arange(36.0), (5, 1))
    assert not score_gaze(make_track(T=5, gaze=g)).any()
    rng = np.random.default_rng(1)
    g = rng.normal(size=(2, 36))
    s = score_gaze(make_track(T=2, gaze=g))
    assert s[0] == pytest.approx(np.linalg.norm(g[0] - g[1]) / 2)
    assert s[1] == pytest.approx(s[0])
    g = rng.normal(size=(3, 36))
    mu = g.sum(axis=0) / 3
    want = [np.sqrt(sum((g[t, k] - mu[k]) ** 2 for k in range(36))) for t in range(3)]
    np.testing.assert_allclose(score_gaze(make_track(T=3, gaze=g)), want, rtol=1e-12)


def test_posture_scores():
    assert not score_posture(make_track(T=4, pose=np.full((4, 2, 2), 0.5))).any()
    pose = np.zeros((2, 1, 2))
    pose[1, 0] = [0.3, 0.4]
    np.testing.assert_allclose(score_posture(make_track(T=2, J=1, pose=pose)), [0.0, 0.5])
    assert score_posture(make_track(T=1)).tolist() == [0.0]


def test_fusion():
    z = np.zeros(2)
    assert not fuse_scores(np.ones(3), np.ones(3), np.ones(3), np.ones(3)).any()
    np.testing.assert_array_equal(fuse_scores([0, 2], z, z, z), [0.0, 0.25])
    with pytest.raises(ValueError):
        fuse_scores(np.zeros(2), np.zeros(3), np.zeros(2), np.zeros(2))


def test_fusion_matches_oracle():
    rng = np.random.default_rng(3)
    cues = [rng.normal(size=5) for _ in range(4)]

    def norm(v):
        lo, hi = min(v), max(v)
        return [0.0] * len(v) if hi == lo else [(x - lo) / (hi - lo) for x in v]

    want = [sum(norm(list(c))[t] for c in cues) / 4 for t in range(5)]
    np.testing.assert_allclose(fuse_scores(*cues), want, rtol=1e-12)


def test_top_k_examples():
    assert select_top_k([3, 1, 2], [(0, 3)], 2).segments[0].tolist() == [0, 2]
    assert select_top_k([1, 1, 1, 1], [(0, 4)], 2).segments[0].tolist() == [0, 1]
    assert select_top_k([5, 4, 3], [(0, 3)], 5).segments[0].tolist() == [0, 1, 2]


def test_uniform_offsets():
    assert select_uniform((0, 16), 4).tolist() == [0, 5, 10, 15]
    assert select_uniform((0, 16), 1).tolist() == [7]
    assert select_uniform((0, 3), 5).tolist() == [0, 1, 2]
    assert select_uniform((32, 48), 4).tolist() == [32, 37, 42, 47]


@pytest.mark.parametrize("strategy", list(Strategy))
def test_short_video_keeps_everything(strategy):
    t = make_track(T=64)
    sel = preprocess(t, PreprocessConfig(strategy=strategy))
    assert sel.total == 64
    assert sorted(sel.indices.tolist()) == list(range(64))


def test_budget_examples():
    t = make_track(T=256)
    assert preprocess(t, PreprocessConfig(strategy=Strategy.AU)).total == 128
    t = make_track(T=128)
    sel = preprocess(t, PreprocessConfig())
    assert sel.indices.tolist() == list(range(128))


def test_budget_must_be_128_by_default():
    with pytest.raises(ValueError):
        PreprocessConfig(n_segments=4, frames_per_segment=16)


def test_strategy_aliases():
    assert Strategy.parse("AU") is Strategy.AU
    assert Strategy.parse(Strategy.GAZE) is Strategy.GAZE
    with pytest.raises(ValueError):
        Strategy.parse("random")


_SPLITS = [(n, 128 // n) for n in (1, 2, 4, 8, 16, 32, 64, 128)]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 400), st.sampled_from(_SPLITS), st.sampled_from(list(Strategy)))
def test_selection_invariants(T, nk, strategy):
    N, K = nk
    cfg = PreprocessConfig(n_segments=N, frames_per_segment=K, strategy=strategy)
    sel = preprocess(make_track(T=T, A=2, J=1, seed=T), cfg)
    idx = sel.indices
    assert sel.total == min(T, 128)
    assert len(np.unique(idx)) == idx.size
    assert np.all(np.diff(idx) > 0)
    for (a, b), seg in zip(sel.ranges, sel.segments):
        assert np.all((seg >= a) & (seg < b))
        if T >= 128:
            assert len(seg) == min(K, b - a)


def test_selection_scores_are_order_independent():
    tracks = [make_track(T=300, seed=s, video_id=f"v{s}") for s in range(4)]
    cfg = PreprocessConfig(strategy=Strategy.FUSION)
    fwd = [preprocess(t, cfg).indices for t in tracks]
    rev = [preprocess(t, cfg).indices for t in reversed(tracks)][::-1]
    for a, b in zip(fwd, rev):
        np.testing.assert_array_equal(a, b)
