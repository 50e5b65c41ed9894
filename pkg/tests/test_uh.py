import itertools

import numpy as np
import pytest

from bdnn.errors import ShapeError, ValidationError
from bdnn.hashnet import NetConfig, NetParams, encode, forward
from bdnn.lbfgs import LbfgsConfig
from bdnn.uh import (UhHyperParams, b_step, restricted_objective, train_uh, uh_gradients,
                     uh_objective, uh_terms)
from helpers import central_difference, max_relative_error, random_codes, random_params


def hand_objective(params, x, b, h_code, lam):
    """Second, loop-based evaluation of the five UH terms."""
    l1, l2, l3, l4 = lam
    D, m = x.shape
    L = b.shape[0]
    w, c = params.weights[-1], params.biases[-1]
    recon = 0.0
    for i in range(m):
        for d in range(D):
            pred = sum(w[d, k] * b[k, i] for k in range(L)) + c[d]
            recon += (x[d, i] - pred) ** 2
    decay = sum(float((wl ** 2).sum()) for wl in params.weights)
    binary = sum((h_code[k, i] - b[k, i]) ** 2 for k in range(L) for i in range(m))
    indep = 0.0
    for a in range(L):
        for bb in range(L):
            v = sum(h_code[a, i] * h_code[bb, i] for i in range(m)) / m - (1.0 if a == bb else 0.0)
            indep += v * v
    balance = sum(sum(h_code[k, i] for i in range(m)) ** 2 for k in range(L))
    return (recon / (2 * m) + l1 / 2 * decay + l2 / (2 * m) * binary + l3 / 2 * indep
            + l4 / (2 * m) * balance)


def orthogonal_balanced_codes():
    # rows of a 4x4 Hadamard matrix minus the all-ones row: orthogonal, zero row sums
    had = np.array([[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]], float)
    return had[1:3]   # L=2, m=4, (1/m) B B^T = I


def ideal_net(b):
    """Identity UH net fed X = B: codes, reconstruction and both penalties are all exact."""
    L = b.shape[0]
    cfg = NetConfig.uh(L, [], L)
    params = NetParams([np.eye(L), np.eye(L)], [np.zeros(L), np.zeros(L)])
    return cfg, params, b.astype(float)


def test_objective_zero_when_every_term_vanishes():
    b = orthogonal_balanced_codes()
    cfg, params, x = ideal_net(b)
    hp = UhHyperParams(0.0, 1.0, 1.0, 1.0, T=1)
    terms = uh_terms(params, cfg, x, b, hp)
    assert all(v == 0.0 for v in terms.values()), terms
    assert uh_objective(params, cfg, x, b, hp) == 0.0


def test_objective_reduces_to_reconstruction_without_penalties(rng):
    cfg = NetConfig.uh(3, [4], 2)
    params = random_params(cfg, rng)
    x = rng.standard_normal((3, 6))
    b = random_codes(rng, 2, 6)
    value = uh_objective(params, cfg, x, b, UhHyperParams(0, 0, 0, 0, T=1))
    resid = x - params.weights[-1] @ b - params.biases[-1][:, None]
    assert value == pytest.approx((resid ** 2).sum() / 12, rel=1e-14)


def test_objective_matches_hand_summation():
    rng = np.random.default_rng(99)
    cfg = NetConfig.uh(2, [3], 2)
    params = random_params(cfg, rng)
    x = rng.standard_normal((2, 3))
    b = random_codes(rng, 2, 3)
    lam = (0.3, 0.7, 0.2, 0.9)
    h_code = forward(params, cfg, x).h(3)
    expected = hand_objective(params, x, b, h_code, lam)
    assert uh_objective(params, cfg, x, b, UhHyperParams(*lam, T=1)) == pytest.approx(expected, rel=1e-12)


def test_objective_shape_error(rng):
    cfg = NetConfig.uh(3, [4], 2)
    params = random_params(cfg, rng)
    with pytest.raises(ShapeError):
        uh_objective(params, cfg, rng.standard_normal((3, 5)), random_codes(rng, 3, 5), UhHyperParams())


def test_gradients_isolated_terms_at_zero_weights(rng):
    cfg = NetConfig.uh(3, [4], 2)
    params = NetParams([np.zeros((4, 3)), np.zeros((2, 4)), np.zeros((3, 2))],
                       [np.zeros(4), np.zeros(2), np.zeros(3)])
    x = rng.standard_normal((3, 5))
    b = random_codes(rng, 2, 5)
    g = uh_gradients(params, cfg, x, b, UhHyperParams(0.5, 0, 0, 0, T=1))
    assert not g.weights[0].any() and not g.weights[1].any()
    np.testing.assert_allclose(g.weights[2], -(x @ b.T) / 5, atol=1e-15)


def test_code_layer_delta_vanishes_at_ideal_codes():
    b = orthogonal_balanced_codes()
    cfg, params, x = ideal_net(b)
    g = uh_gradients(params, cfg, x, b, UhHyperParams(0.0, 1.0, 1.0, 1.0, T=1))
    # dJ/dW^(1) = Delta^(2) X^T and dJ/dc^(1) = Delta^(2) 1: both vanish with the delta
    assert not g.weights[0].any() and not g.biases[0].any()


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    cfg = NetConfig.uh(3, [4], 2)
    assert cfg.n == 4
    params = random_params(cfg, rng)
    x = rng.standard_normal((3, 5))
    b = random_codes(rng, 2, 5)
    hp = UhHyperParams(0.1, 0.5, 0.3, 0.2, T=1)
    analytic = uh_gradients(params, cfg, x, b, hp).flatten()
    numeric = central_difference(
        lambda v: uh_objective(NetParams.unflatten(v, cfg), cfg, x, b, hp), params.flatten())
    assert max_relative_error(analytic, numeric) < 1e-5


def enumerate_min(params, x, h_code, lam2, L, m):
    best = np.inf
    for bits in itertools.product((-1, 1), repeat=L * m):
        best = min(best, restricted_objective(params, x, h_code, np.array(bits).reshape(L, m), lam2))
    return best


def test_b_step_with_zero_reconstruction_weights_is_sign_of_h(rng):
    cfg = NetConfig.uh(3, [4], 2)
    params = random_params(cfg, rng)
    params.weights[-1][:] = 0.0
    x = rng.standard_normal((3, 7))
    cache = forward(params, cfg, x)
    b = b_step(params, cache, x, UhHyperParams())
    np.testing.assert_array_equal(b, np.where(cache.h(3) >= 0, 1, -1))


def test_b_step_tie_goes_to_plus_one():
    cfg = NetConfig.uh(2, [], 1)
    params = NetParams([np.zeros((1, 2)), np.zeros((2, 1))], [np.zeros(1), np.zeros(2)])
    x = np.zeros((2, 3))
    cache = forward(params, cfg, x)
    b = b_step(params, cache, x, UhHyperParams(), b0=-np.ones((1, 3)))
    np.testing.assert_array_equal(b, np.ones((1, 3)))


def test_b_step_single_bit_is_exact(rng):
    # with one row, the closed-form row update is the global minimizer
    for _ in range(30):
        m = int(rng.integers(1, 9))
        cfg = NetConfig.uh(2, [3], 1)
        params = random_params(cfg, rng, scale=1.0)
        x = rng.standard_normal((2, m))
        cache = forward(params, cfg, x)
        lam2 = float(rng.uniform(0.01, 2))
        b = b_step(params, cache, x, UhHyperParams(lambda2=lam2))
        val = restricted_objective(params, x, cache.h(3), b, lam2)
        assert val <= enumerate_min(params, x, cache.h(3), lam2, 1, m) + 1e-12


def test_b_step_is_row_wise_optimal_and_never_worse_than_start(rng):
    for _ in range(40):
        L, m = int(rng.integers(2, 5)), int(rng.integers(1, 5))
        cfg = NetConfig.uh(3, [3], L)
        params = random_params(cfg, rng, scale=1.0)
        x = rng.standard_normal((3, m))
        cache = forward(params, cfg, x)
        h = cache.h(3)
        lam2 = float(rng.uniform(0.01, 2))
        b0 = random_codes(rng, L, m)
        b = b_step(params, cache, x, UhHyperParams(lambda2=lam2), b0=b0)
        val = restricted_objective(params, x, h, b, lam2)
        assert val <= restricted_objective(params, x, h, b0, lam2) + 1e-12
        # no single-row replacement improves the result (coordinate-wise fixed point)
        for k in range(L):
            for row in itertools.product((-1, 1), repeat=m):
                trial = b.copy()
                trial[k] = row
                assert restricted_objective(params, x, h, trial, lam2) >= val - 1e-9


def test_train_uh_trace_is_monotone_and_deterministic():
    rng = np.random.default_rng(8)
    x = np.concatenate([rng.standard_normal((4, 25)) + 2, rng.standard_normal((4, 25)) - 2], axis=1)
    cfg = NetConfig.uh(4, [5], 2)
    hp = UhHyperParams(T=3)
    lcfg = LbfgsConfig(max_iters=30)
    params, b, trace = train_uh(x, cfg, hp, lcfg, seed=1)
    assert [r.step for r in trace] == ["init", "wc"] + ["b", "wc"] * 3
    for prev, cur in zip(trace, trace[1:]):
        if cur.step == "b":
            assert cur.J <= prev.J
        else:
            assert cur.J <= prev.J + 1e-9 * abs(prev.J)
    _, b2, trace2 = train_uh(x, cfg, hp, lcfg, seed=1)
    assert [r.J for r in trace] == [r.J for r in trace2]
    np.testing.assert_array_equal(b, b2)
    agree = (encode(params, cfg, x) == b).mean()
    assert agree >= 0.95


def test_train_uh_separates_two_clusters():
    rng = np.random.default_rng(2)
    centers = np.array([[4, 4, 0, 0], [-4, -4, 0, 0]], float).T
    x = np.concatenate([centers[:, [0]] + 0.3 * rng.standard_normal((4, 8)),
                        centers[:, [1]] + 0.3 * rng.standard_normal((4, 8))], axis=1)
    cfg = NetConfig.uh(4, [3], 2)
    params, _, _ = train_uh(x, cfg, UhHyperParams(), LbfgsConfig(max_iters=50), seed=0)
    codes = encode(params, cfg, x)
    dist = (codes[:, :, None] != codes[:, None, :]).sum(axis=0)
    cluster = np.repeat([0, 1], 8)
    same = cluster[:, None] == cluster[None, :]
    off = ~np.eye(16, dtype=bool)
    assert dist[~same].mean() - dist[same & off].mean() > 0


def test_train_uh_rejects_too_few_samples(rng):
    with pytest.raises(ValidationError):
        train_uh(rng.standard_normal((4, 2)), NetConfig.uh(4, [3], 3))


def test_train_uh_rejects_sh_config(rng):
    with pytest.raises(ValidationError):
        train_uh(rng.standard_normal((4, 20)), NetConfig.sh(4, [3], 2))
