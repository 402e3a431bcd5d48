import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genlie.metrics import UndefinedAUCError, accuracy, auc, confusion, f1_positive, metrics_report


def pairwise_auc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    u = 0.0
    for a in pos:
        for b in neg:
            u += 1.0 if a > b else 0.5 if a == b else 0.0
    return 100.0 * u / (len(pos) * len(neg))


def test_f1_examples():
    assert f1_positive([1, 0, 1], [1, 0, 1]) == 100.0
    assert f1_positive([0, 0, 0], [1, 0, 1]) == 0.0
    assert f1_positive([1, 1, 0], [1, 0, 1]) == 50.0


def test_accuracy_examples():
    assert accuracy([1, 0], [1, 0]) == 100.0
    assert accuracy([1, 1, 0, 0], [1, 0, 1, 0]) == 50.0
    assert accuracy([1, 1, 1, 0, 0], [1, 1, 1, 1, 1]) == 60.0
    with pytest.raises(ValueError):
        accuracy([], [])


def test_auc_examples():
    assert auc([0.9, 0.1], [1, 0]) == 100.0
    assert auc([0.3] * 6, [1, 0, 1, 0, 1, 0]) == 50.0
    with pytest.raises(UndefinedAUCError):
        auc([0.1, 0.2], [1, 1])


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 200), st.integers(0, 2**32 - 1), st.sampled_from([3, 10, 1000]))
def test_auc_matches_pairwise_oracle(n, seed, levels):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    y[0], y[1] = 0, 1
    s = rng.integers(0, levels, size=n) / levels
    assert auc(s, y) == pairwise_auc(s, y)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 100), st.integers(0, 2**32 - 1))
def test_auc_complement_and_permutation(n, seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    y[0], y[1] = 0, 1
    s = rng.normal(size=n)
    assert auc(s, y) + auc(-s, y) == pytest.approx(100.0, abs=1e-9)
    pred = (s > 0).astype(int)
    perm = rng.permutation(n)
    assert f1_positive(pred, y) == f1_positive(pred[perm], y[perm])
    assert accuracy(pred, y) == accuracy(pred[perm], y[perm])
    tp, fp, tn, fn = confusion(pred, y)
    assert accuracy(pred, y) == 100.0 * (tp + tn) / n


def test_report():
    r = metrics_report([0.9, 0.2, 0.8, 0.1], [1, 0, 1, 0])
    assert (r.f1, r.acc, r.auc) == (100.0, 100.0, 100.0)
    r = metrics_report([0.1, 0.2, 0.3], [1, 0, 1])
    assert r.f1 == 0.0 and r.tp == 0
    assert metrics_report([0.4, 0.6], [1, 1]).auc is None
    assert "AUC" in r.table()
