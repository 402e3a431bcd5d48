import numpy as np
import pytest

from genlie.aligner import CacheError, init_aligner, mean_pool, reembed_backward, reembed_forward
from genlie.gradcheck import check_model_gradients, id_branch_aligner_grads, toy_problem
from genlie.heads import (
    LossWeights, cls_forward_backward, grl_transform, mine_triplets, speaker_forward_backward,
    total_loss, triplet_forward_backward, triplet_loss,
)
from helpers import finite_difference, rel_err


def test_mean_pool():
    np.testing.assert_array_equal(mean_pool([[1.0, 2.0]]), [1.0, 2.0])
    np.testing.assert_array_equal(mean_pool([[0, 0], [2, 4]]), [1.0, 2.0])
    H = np.random.default_rng(0).normal(size=(5, 3))
    np.testing.assert_allclose(mean_pool(H), [sum(H[:, j]) / 5 for j in range(3)], rtol=1e-15)
    with pytest.raises(ValueError):
        mean_pool(np.zeros((0, 3)))


def test_zero_weights_give_bias():
    p = init_aligner(np.random.default_rng(0), 3, 4, 2)
    p["W1"][:] = 0
    p["W2"][:] = 0
    p["b2"][:] = [1.5, -2.0]
    z, _ = reembed_forward(np.ones(3), p)
    np.testing.assert_array_equal(z, [1.5, -2.0])


def test_no_dropout_train_equals_eval():
    p = init_aligner(np.random.default_rng(0), 3, 4, 2)
    x = np.random.default_rng(1).normal(size=(5, 3))
    a, _ = reembed_forward(x, p, "train", np.random.default_rng(2), 0.0)
    b, _ = reembed_forward(x, p, "eval")
    np.testing.assert_array_equal(a, b)


def test_hand_computed_forward():
    p = {"W1": np.array([[1.0, -1.0], [2.0, 0.5]]), "b1": np.array([0.0, -1.0]),
         "W2": np.array([[1.0, 1.0], [-1.0, 2.0]]), "b2": np.array([0.5, 0.0])}
    # pre = [1-2, 2+1-1] = [-1, 2] -> relu [0, 2] -> z = [0+2+0.5, 0+4]
    z, _ = reembed_forward(np.array([1.0, 2.0]), p)
    np.testing.assert_array_equal(z, [2.5, 4.0])


def test_backward_zero_and_cache_reuse():
    p = init_aligner(np.random.default_rng(0), 3, 4, 2)
    _, cache = reembed_forward(np.ones((2, 3)), p)
    grads, dx = reembed_backward(cache, np.zeros((2, 2)))
    assert all(not g.any() for g in grads.values()) and not dx.any()
    with pytest.raises(CacheError):
        reembed_backward(cache, np.zeros((2, 2)))


def test_aligner_backward_matches_finite_differences():
    rng = np.random.default_rng(5)
    p = init_aligner(rng, 4, 6, 3)
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(3, 3))
    _, cache = reembed_forward(x, p)
    grads, dx = reembed_backward(cache, w)
    f = lambda: float(np.sum(reembed_forward(x, p)[0] * w))  # noqa: E731
    for k in p:
        assert rel_err(grads[k], finite_difference(f, p[k])) < 1e-6
    assert rel_err(dx, finite_difference(f, x)) < 1e-6


def test_bce_examples_and_gradient():
    params = {"w_cls": np.zeros(2), "b_cls": np.zeros(1)}
    p, loss, _, _ = cls_forward_backward(np.ones((3, 2)), [0, 1, 1], params)
    np.testing.assert_allclose(p, 0.5)
    assert loss == pytest.approx(np.log(2))
    params = {"w_cls": np.array([40.0, 0.0]), "b_cls": np.zeros(1)}
    _, loss, _, _ = cls_forward_backward(np.ones((1, 2)), [1], params)
    assert loss < 1e-12
    rng = np.random.default_rng(0)
    z = rng.normal(size=(4, 3))
    y = np.array([0, 1, 1, 0])
    params = {"w_cls": rng.normal(size=3), "b_cls": np.array([0.1])}
    _, _, dz, g = cls_forward_backward(z, y, params)
    f = lambda: cls_forward_backward(z, y, params)[1]  # noqa: E731
    assert rel_err(g["w_cls"], finite_difference(f, params["w_cls"])) < 1e-6
    assert rel_err(dz, finite_difference(f, z)) < 1e-6
    with pytest.raises(ValueError):
        cls_forward_backward(np.zeros((0, 3)), [], params)


def test_grl_examples():
    g = np.array([2.0, -4.0])
    np.testing.assert_array_equal(grl_transform(g, 1.0), -g)
    assert not grl_transform(g, 0.0).any()
    np.testing.assert_array_equal(grl_transform(g, 0.5), [-1.0, 2.0])


def test_speaker_head():
    params = {"W_spk": np.zeros((2, 3)), "b_spk": np.zeros(2)}
    _, loss, _, _ = speaker_forward_backward(np.ones((2, 3)), [0, 1], params)
    assert loss == pytest.approx(np.log(2))
    params = {"W_spk": np.array([[50.0, 0, 0], [-50.0, 0, 0]]), "b_spk": np.zeros(2)}
    _, loss, _, _ = speaker_forward_backward(np.array([[1.0, 0, 0]]), [0], params)
    assert loss < 1e-12
    with pytest.raises(ValueError):
        speaker_forward_backward(np.ones((1, 3)), [2], params)
    rng = np.random.default_rng(2)
    z = rng.normal(size=(4, 3))
    s = np.array([0, 2, 1, 2])
    params = {"W_spk": rng.normal(size=(3, 3)), "b_spk": rng.normal(size=3)}
    _, _, dz_plain, g = speaker_forward_backward(z, s, params, reverse=False)
    f = lambda: speaker_forward_backward(z, s, params)[1]  # noqa: E731
    assert rel_err(dz_plain, finite_difference(f, z)) < 1e-6
    assert rel_err(g["W_spk"], finite_difference(f, params["W_spk"])) < 1e-6
    _, _, dz_rev, g_rev = speaker_forward_backward(z, s, params, lam=0.7)
    np.testing.assert_array_equal(dz_rev, -0.7 * dz_plain)
    np.testing.assert_array_equal(g_rev["W_spk"], g["W_spk"])


def test_triplet_examples():
    a = np.zeros(2)
    assert triplet_loss(a, a, np.array([1.0, 1.0]), 0.5)[0] == 0.0
    assert triplet_loss(a, np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.5)[0] == pytest.approx(0.5)


def test_triplet_subgradients_match_finite_differences():
    rng = np.random.default_rng(4)
    za, zp, zn = rng.normal(size=(3, 4)) * 0.2
    value, grads = triplet_loss(za, zp, zn, 1.0)
    assert value > 0
    for v, g in zip((za, zp, zn), grads):
        f = lambda: triplet_loss(za, zp, zn, 1.0)[0]  # noqa: E731
        assert rel_err(g, finite_difference(f, v)) < 1e-6


def test_mining():
    assert mine_triplets([1, 1, 0]) == [(0, 1, 2), (1, 0, 2)]
    assert mine_triplets([0, 0, 0]) == []
    trip = mine_triplets([1, 1, 0, 0])
    assert len(trip) == 8 and len(set(trip)) == 8
    loss, dz, n = triplet_forward_backward(np.ones((3, 2)), [1, 1, 1], 0.2)
    assert loss == 0.0 and n == 0 and not dz.any()


def test_total_loss_examples():
    w = LossWeights(alpha=0.1, beta=0.1)
    assert total_loss(0.6, 0.7, 0.2, w).l_total == pytest.approx(0.69)
    assert total_loss(0.6, 0.7, 0.2, LossWeights(alpha=0, beta=0)).l_total == 0.6
    assert total_loss(0, 0, 0, w).l_total == 0.0


def test_full_model_gradcheck_single_seed():
    for chk in check_model_gradients(seed=1):
        assert chk.max_rel_error < 1e-4, chk


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
def test_grl_sign_law(lam):
    config, params, pooled, _, speakers = toy_problem(3)
    w = LossWeights(alpha=0.1, lam=lam)
    rev = id_branch_aligner_grads(params, pooled, speakers, w, config, reverse=True)
    plain = id_branch_aligner_grads(params, pooled, speakers, w, config, reverse=False)
    for k in rev:
        np.testing.assert_array_equal(rev[k], -lam * plain[k])
