import numpy as np
import pytest

from bdnn.errors import ShapeError, ValidationError
from bdnn.itq import (covariance, fix_signs, itq_encode, itq_train, quantization_loss,
                      random_orthogonal, top_eigenvectors)
from bdnn.numerics import sign


def test_covariance_matches_numpy(rng):
    x = rng.standard_normal((4, 30))
    np.testing.assert_allclose(covariance(x), np.cov(x, bias=True), atol=1e-12)


def test_fix_signs_makes_largest_entry_positive():
    v = np.array([[0.1, 3.0], [-2.0, -1.0]])
    np.testing.assert_array_equal(fix_signs(v), [[-0.1, 3.0], [2.0, -1.0]])


def test_top_eigenvectors_against_reference(rng):
    x = rng.standard_normal((6, 200)) * np.array([5, 4, 3, 2, 1, 0.5])[:, None]
    vecs = top_eigenvectors(x, 3)
    ref_vals, ref_vecs = np.linalg.eig(np.cov(x, bias=True))
    ref = ref_vecs[:, np.argsort(ref_vals)[::-1][:3]].real
    # same directions up to sign
    np.testing.assert_allclose(np.abs(vecs.T @ ref), np.eye(3), atol=1e-8)


def test_random_orthogonal(rng):
    q = random_orthogonal(5, rng)
    np.testing.assert_allclose(q.T @ q, np.eye(5), atol=1e-12)


def test_invariants_and_monotone_loss(rng):
    x = rng.standard_normal((10, 300)) * np.linspace(3, 0.5, 10)[:, None] + 2.0
    model = itq_train(x, 6, iters=40, seed=1)
    np.testing.assert_allclose(model.rotation.T @ model.rotation, np.eye(6), atol=1e-8)
    np.testing.assert_allclose(model.projection.T @ model.projection, np.eye(6), atol=1e-8)
    hist = model.loss_history
    assert len(hist) == 41
    assert all(b <= a + 1e-9 * a for a, b in zip(hist, hist[1:]))
    assert hist[-1] < hist[0]


def test_isotropic_single_bit_is_balanced_hyperplane(rng):
    half = rng.standard_normal((3, 500))
    x = np.concatenate([half, -half], axis=1) + np.array([[1.0], [-2.0], [0.5]])
    model = itq_train(x, 1, seed=0)
    assert np.linalg.norm(model.projection) == pytest.approx(1.0, abs=1e-12)
    assert abs(itq_encode(model, x).mean()) < 0.2


def test_zero_iterations_keep_random_rotation(rng):
    x = rng.standard_normal((5, 40))
    model = itq_train(x, 3, iters=0, seed=9)
    expected = random_orthogonal(3, np.random.default_rng(9))
    np.testing.assert_array_equal(model.rotation, expected)
    v = model.projection.T @ (x - x.mean(axis=1, keepdims=True))
    np.testing.assert_array_equal(itq_encode(model, x), sign(expected.T @ v))


def test_encode_mean_gives_all_plus_one(rng):
    x = rng.standard_normal((5, 40))
    model = itq_train(x, 4, seed=0)
    np.testing.assert_array_equal(itq_encode(model, model.mean[:, None]), np.ones((4, 1)))


def test_training_codes_equal_final_b(rng):
    x = rng.standard_normal((8, 100))
    model = itq_train(x, 5, iters=20, seed=2)
    v = model.project(x)
    codes = itq_encode(model, x)
    assert quantization_loss(codes, v) == pytest.approx(model.loss_history[-1], rel=1e-12)
    np.testing.assert_array_equal(codes, itq_encode(model, x))


def test_deterministic_given_seed(rng):
    x = rng.standard_normal((6, 50))
    a, b = itq_train(x, 4, seed=5), itq_train(x, 4, seed=5)
    assert a.rotation.tobytes() == b.rotation.tobytes()


def test_errors(rng):
    with pytest.raises(ValidationError):
        itq_train(rng.standard_normal((6, 4)), 4)
    with pytest.raises(ValidationError):
        itq_train(rng.standard_normal((3, 40)), 4)
    model = itq_train(rng.standard_normal((6, 40)), 2)
    with pytest.raises(ShapeError):
        itq_encode(model, np.zeros((5, 2)))
