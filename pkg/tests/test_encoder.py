import numpy as np
import pytest

from genlie.encoder import (
    DimensionMismatchError, EncoderError, FeatureBank, FeatureLookupError, SyntheticEncoder,
    build_feature_bank, encode_synthetic, load_feature_bank, summary_vector,
)
from genlie.cues import CorpusManifest
from genlie.preprocess import PreprocessConfig, preprocess
from helpers import make_track


def test_summary_vector_layout():
    au = np.array([[1.0], [3.0]])
    gaze = np.zeros((2, 36))
    pose = np.array([[[0.0, 1.0]], [[2.0, 1.0]]])
    s = summary_vector(au, gaze, pose)
    assert s.shape == (2 * (1 + 36 + 2),)
    assert s[0] == 2.0 and s[39] == 1.0  # AU mean, AU population std
    assert s[37] == 1.0 and s[39 + 37] == 1.0


def test_synthetic_encoder_deterministic_and_sensitive():
    t = make_track(T=20)
    enc = SyntheticEncoder(seed=3, dim=16)
    a = enc.encode_segment(t, range(10))
    b = SyntheticEncoder(seed=3, dim=16).encode_segment(t, range(10))
    np.testing.assert_array_equal(a, b)
    au = np.array(t.au)
    au[4, 0] += 0.5
    t2 = make_track(T=20, au=au, gaze=t.gaze, pose=t.pose)
    assert not np.array_equal(enc.encode_segment(t2, range(10)), a)
    np.testing.assert_array_equal(encode_synthetic([t.frame(i) for i in range(10)], 3, 16), a)


def test_empty_segment_rejected():
    with pytest.raises(EncoderError):
        SyntheticEncoder(dim=4).encode_segment(make_track(), [])


def test_bank_lookup_and_errors():
    v = np.arange(4, dtype=np.float32)
    bank = FeatureBank({("vidA", 0): v}, 4)
    np.testing.assert_array_equal(bank.encode_from_bank("vidA", 0), v)
    with pytest.raises(FeatureLookupError, match="vidB"):
        bank.encode_from_bank("vidB", 0)
    with pytest.raises(DimensionMismatchError):
        FeatureBank({("a", 0): np.zeros(3)}, 4)


def test_bank_round_trip(tmp_path):
    tracks = [make_track(T=200, video_id=f"v{i}", seed=i) for i in range(3)]
    m = CorpusManifest(tracks, 3, 2)
    sels = [preprocess(t, PreprocessConfig()) for t in tracks]
    bank = build_feature_bank(m, sels, SyntheticEncoder(1, 768))
    path = tmp_path / "f.glf"
    bank.save(path)
    back = load_feature_bank(path, expected_dim=768)
    assert back.to_bytes() == bank.to_bytes()
    assert back.n_segments("v1") == 8
    with pytest.raises(DimensionMismatchError):
        load_feature_bank(path, expected_dim=64)


def test_bank_is_float32_view_of_encoder():
    t = make_track(T=130)
    sel = preprocess(t, PreprocessConfig())
    enc = SyntheticEncoder(2, 8)
    bank = build_feature_bank(CorpusManifest([t], 3, 2), [sel], enc)
    np.testing.assert_array_equal(bank.encode_video(t, sel), enc.encode_video(t, sel).astype(np.float32))
