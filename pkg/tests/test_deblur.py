"""Tests for the deblurring instantiation: kernels, adjoints, the smoothed
regularizer, noise and metrics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msdecomp import deblur as db
from msdecomp import gradsolve as gs


# ---------------------------------------------------------------------------
# kernels


def test_kernel_size_one_is_identity_weight():
    k = db.gaussian_kernel(1, 3.0)
    assert k.weights.shape == (1, 1)
    assert k.weights[0, 0] == 1.0


def test_kernel_flat_limit():
    k = db.gaussian_kernel(3, 1e6)
    assert np.all(np.abs(k.weights - 1.0 / 9.0) < 1e-9)


def test_kernel_nine_by_nine():
    k = db.gaussian_kernel(9, 2.0)
    assert abs(k.weights.sum() - 1.0) <= 1e-12
    assert k.weights[4, 4] == k.weights.max()
    assert np.allclose(k.weights, k.weights.T)
    assert np.allclose(k.weights, np.rot90(k.weights))


@pytest.mark.parametrize("size,sigma", [(0, 1.0), (4, 1.0), (3, 0.0), (3, -2.0)])
def test_kernel_validation(size, sigma):
    with pytest.raises(ValueError):
        db.gaussian_kernel(size, sigma)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([1, 3, 5, 7, 9, 11]), st.floats(0.1, 50.0))
def test_kernel_always_normalised(size, sigma):
    k = db.gaussian_kernel(size, sigma)
    assert abs(k.weights.sum() - 1.0) <= 1e-12


# ---------------------------------------------------------------------------
# blurring and its adjoint


def test_unit_kernel_blur_is_identity():
    rng = np.random.default_rng(0)
    img = rng.standard_normal((8, 8))
    k = db.gaussian_kernel(1, 1.0)
    assert np.array_equal(db.blur_apply(img, k), img)
    assert np.array_equal(db.blur_adjoint(img, k), img)


def test_constant_interior_preserved():
    k = db.gaussian_kernel(5, 1.5)
    img = np.full((16, 16), 0.7)
    out = db.blur_apply(img, k)
    interior = out[2:-2, 2:-2]
    assert np.allclose(interior, 0.7, atol=1e-14)
    # zero padding bites at the border
    assert out[0, 0] < 0.7


def test_adjoint_identity_randomised():
    k = db.gaussian_kernel(9, 2.0)
    rng = np.random.default_rng(42)
    for _ in range(20):
        u = rng.standard_normal((16, 16))
        v = rng.standard_normal((16, 16))
        lhs = float(np.vdot(db.blur_apply(u, k), v))
        rhs = float(np.vdot(u, db.blur_adjoint(v, k)))
        scale = np.linalg.norm(u) * np.linalg.norm(v)
        assert abs(lhs - rhs) / scale <= 1e-12


def test_adjoint_differs_from_forward_for_asymmetric_kernel():
    k = db.Kernel(size=3, sigma=1.0,
                  weights=np.array([[0.5, 0.2, 0.0],
                                    [0.1, 0.1, 0.0],
                                    [0.0, 0.1, 0.0]]))
    rng = np.random.default_rng(1)
    u = rng.standard_normal((10, 10))
    v = rng.standard_normal((10, 10))
    assert not np.allclose(db.blur_apply(u, k), db.blur_adjoint(u, k))
    lhs = float(np.vdot(db.blur_apply(u, k), v))
    rhs = float(np.vdot(u, db.blur_adjoint(v, k)))
    assert abs(lhs - rhs) / (np.linalg.norm(u) * np.linalg.norm(v)) <= 1e-12


# ---------------------------------------------------------------------------
# regularizer


def test_h1_value_at_zero_is_delta():
    params = db.H1Params(delta=1e-3)
    z = np.zeros((12, 12))
    assert db.h1_value(z, params) == 1e-3
    assert np.array_equal(db.h1_gradient(z, params), z)


def test_h1_constant_image_no_smoothing():
    n, c = 10, -0.37
    value = db.h1_value(np.full((n, n), c), db.H1Params(delta=0.0))
    assert abs(value - abs(c) * n) <= 1e-12


def test_h1_zero_with_zero_delta_by_convention():
    params = db.H1Params(delta=0.0)
    z = np.zeros((6, 6))
    assert db.h1_value(z, params) == 0.0
    assert np.array_equal(db.h1_gradient(z, params), z)


def test_h1_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    u = rng.standard_normal((16, 16))
    params = db.H1Params(delta=1e-3)

    def fg(x):
        return db.h1_value(x, params), db.h1_gradient(x, params)

    assert gs.grad_check(fg, u, epsilon=1e-6) <= 1e-6


def test_h1_negative_delta_rejected():
    with pytest.raises(ValueError):
        db.H1Params(delta=-1.0)


def test_h1_regularizer_homogeneity_flag():
    assert db.H1Regularizer(0.0).one_homogeneous
    assert not db.H1Regularizer(1e-3).one_homogeneous
    reg = db.H1Regularizer(0.0)
    rng = np.random.default_rng(3)
    u = rng.standard_normal((8, 8))
    assert abs(reg.value(2.5 * u) - 2.5 * reg.value(u)) <= 1e-12


# ---------------------------------------------------------------------------
# step objective


def test_objective_value_when_prefit():
    # sigma_prev already reproduces the data: the zero increment pays only
    # the smoothing offset
    k = db.gaussian_kernel(5, 1.0)
    rng = np.random.default_rng(2)
    sigma = rng.standard_normal((12, 12))
    data = db.blur_apply(sigma, k)
    params = db.H1Params(delta=1e-3)
    fg = db.objective(sigma, data, 4.0, k, params)
    value, grad = fg(np.zeros((12, 12)))
    assert value == params.delta
    assert np.array_equal(grad, np.zeros((12, 12)))


def test_objective_gradient_matches_finite_differences():
    k = db.gaussian_kernel(9, 2.0)
    rng = np.random.default_rng(9)
    fg = db.objective(rng.standard_normal((12, 12)),
                      rng.standard_normal((12, 12)), 2.0, k,
                      db.H1Params(delta=1e-3))
    assert gs.grad_check(fg, rng.standard_normal((12, 12)), 1e-6) <= 1e-5


def test_tiny_penalty_drives_minimizer_to_zero():
    k = db.gaussian_kernel(3, 1.0)
    data = db.nebula_phantom(8)
    fg = db.objective(np.zeros((8, 8)), data, 1e-12, k, db.H1Params(delta=1e-3))
    res = gs.minimize(fg, data.copy(), gs.SolverParams(tau=1e-10))
    assert np.linalg.norm(res.minimizer) <= 1e-6


def test_objective_convexity_witness():
    k = db.gaussian_kernel(9, 2.0)
    rng = np.random.default_rng(13)
    fg = db.objective(rng.standard_normal((10, 10)),
                      rng.standard_normal((10, 10)), 3.0, k,
                      db.H1Params(delta=1e-3))
    for trial in range(5):
        u1 = rng.standard_normal((10, 10))
        u2 = rng.standard_normal((10, 10))
        f1, _ = fg(u1)
        f2, _ = fg(u2)
        for t in (0.25, 0.5, 0.75):
            fmid, _ = fg(t * u1 + (1 - t) * u2)
            assert fmid <= t * f1 + (1 - t) * f2 + 1e-10


# ---------------------------------------------------------------------------
# noise


def test_zero_variance_is_identity():
    img = db.nebula_phantom(16)
    out = db.add_gaussian_noise(img, 0.0, seed=4)
    assert np.array_equal(out, img)


def test_noise_sample_variance():
    out = db.add_gaussian_noise(np.zeros((256, 256)), 0.01, seed=123)
    assert 0.0095 <= out.var() <= 0.0105
    assert abs(out.mean()) < 1e-3


def test_noise_determinism():
    img = db.nebula_phantom(32)
    a = db.add_gaussian_noise(img, 0.01, seed=7)
    b = db.add_gaussian_noise(img, 0.01, seed=7)
    assert np.array_equal(a, b)
    c = db.add_gaussian_noise(img, 0.01, seed=8)
    assert not np.array_equal(a, c)


def test_negative_variance_rejected():
    with pytest.raises(ValueError):
        db.add_gaussian_noise(np.zeros((4, 4)), -0.1, 0)


def test_counter_uniforms_are_open_interval():
    u = db.counter_uniforms(99, 100000)
    assert u.min() > 0.0 and u.max() < 1.0


# ---------------------------------------------------------------------------
# metrics and phantom


def test_relative_error_identical():
    img = db.nebula_phantom(12)
    assert db.relative_error(img, img) == 0.0


def test_relative_error_doubling():
    img = db.nebula_phantom(12)
    assert abs(db.relative_error(2.0 * img, img) - 1.0) <= 1e-12


def test_relative_error_hand_case():
    b = np.array([[3.0, 0.0], [0.0, 4.0]])
    a = b.copy()
    a[0, 0] += np.linalg.norm(b)  # perturb one pixel by ||b||
    assert abs(db.relative_error(a, b) - 1.0) <= 1e-12


def test_relative_error_zero_reference_flagged():
    with pytest.raises(ValueError):
        db.relative_error(np.ones((2, 2)), np.zeros((2, 2)))


def test_relative_error_shape_mismatch():
    with pytest.raises(ValueError):
        db.relative_error(np.ones((2, 2)), np.ones((3, 3)))


def test_phantom_deterministic_and_in_range():
    a = db.nebula_phantom(64)
    b = db.nebula_phantom(64)
    assert np.array_equal(a, b)
    assert a.min() == 0.0 and a.max() == 1.0
    assert not np.array_equal(a, db.nebula_phantom(64, seed=1))


def test_phantom_is_smooth():
    img = db.nebula_phantom(64)
    dx = np.abs(np.diff(img, axis=0)).max()
    dy = np.abs(np.diff(img, axis=1)).max()
    assert max(dx, dy) < 0.25


def test_image_field_validation():
    with pytest.raises(ValueError):
        db.ImageField(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        db.ImageField(np.array([[np.nan, 0.0], [0.0, 0.0]]))
    field = db.ImageField(np.zeros((5, 5)))
    assert field.n == 5 and field.h == 0.2


def test_h1_distance_is_a_metric_sample():
    a = db.nebula_phantom(16)
    assert db.h1_distance(a, a) == 0.0
    b = db.nebula_phantom(16, seed=2)
    assert db.h1_distance(a, b) == db.h1_distance(b, a)
    assert db.h1_distance(a, b) > 0
