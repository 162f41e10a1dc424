import numpy as np
import pytest

from dmabo.errors import InputError, NumericalError
from dmabo.kernels import (KernelSpec, TabulatedFunction, cholesky_with_jitter,
                           kernel_eval, kernel_matrix, sample_prior_function)


def test_se_kernel_at_identical_inputs_is_output_scale():
    spec = KernelSpec(lengthscale=1.0)
    assert kernel_eval(spec, 0.0, 0.0) == pytest.approx(1.0)
    half = KernelSpec(lengthscale=1.0, output_scale=0.5)
    assert kernel_eval(half, 0.3, 0.3) == pytest.approx(0.5)


def test_se_kernel_unit_distance():
    # exp(-d^2 / (2 l^2)) evaluated by hand at d=1, l=1
    spec = KernelSpec(lengthscale=1.0)
    assert kernel_eval(spec, 0.0, 1.0) == pytest.approx(np.exp(-0.5), abs=1e-12)


def test_matern_at_identical_inputs():
    spec = KernelSpec(family="matern52", lengthscale=1.0)
    assert kernel_eval(spec, 0.0, 0.0) == pytest.approx(1.0)


def test_kernel_symmetry_and_range():
    rng = np.random.default_rng(0)
    X = rng.uniform(-2, 2, size=(12, 3))
    for family in ("squared-exponential", "matern52"):
        spec = KernelSpec(family=family, lengthscale=[0.5, 1.0, 2.0])
        K = kernel_matrix(spec, X, X)
        assert np.allclose(K, K.T, atol=1e-14)
        assert np.all(K <= 1.0 + 1e-12)
        assert np.all(K >= -1.0 - 1e-12)


def test_gram_matrices_factor_with_jitter():
    rng = np.random.default_rng(1)
    for family in ("squared-exponential", "matern52"):
        spec = KernelSpec(family=family, lengthscale=0.3)
        X = np.sort(rng.uniform(-1, 1, size=40))[:, None]
        K = kernel_matrix(spec, X, X)
        L = cholesky_with_jitter(K)
        assert np.all(np.isfinite(L))


def test_cholesky_jitter_gives_up_on_indefinite_matrix():
    not_psd = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NumericalError):
        cholesky_with_jitter(not_psd)


def test_dimension_mismatch_rejected():
    spec = KernelSpec(lengthscale=[1.0, 1.0])
    with pytest.raises(InputError):
        kernel_eval(spec, np.zeros(2), np.zeros(3))
    with pytest.raises(InputError):
        kernel_eval(spec, np.zeros(3), np.zeros(3))


def test_spec_validation():
    with pytest.raises(InputError):
        KernelSpec(family="cubic")
    with pytest.raises(InputError):
        KernelSpec(lengthscale=-1.0)
    with pytest.raises(InputError):
        KernelSpec(output_scale=1.5)


def test_prior_sample_deterministic():
    spec = KernelSpec(lengthscale=0.2)
    grid = np.linspace(-1, 1, 30)[:, None]
    f1 = sample_prior_function(spec, grid, 42)
    f2 = sample_prior_function(spec, grid, 42)
    assert np.array_equal(f1.values, f2.values)
    f3 = sample_prior_function(spec, grid, 43)
    assert not np.array_equal(f1.values, f3.values)


def test_prior_sample_single_point_moments():
    # Monte-Carlo check against N(0, 1) at a one-point grid.
    spec = KernelSpec(lengthscale=1.0)
    grid = np.array([[0.0]])
    draws = np.array([sample_prior_function(spec, grid, s).values[0] for s in range(100)])
    assert abs(draws.mean()) < 0.3
    assert 0.6 <= draws.var() <= 1.5


def test_prior_sample_perfect_correlation():
    # Two points at numerically zero scaled distance draw equal values.
    spec = KernelSpec(lengthscale=1e8)
    grid = np.array([[0.0], [1.0]])
    f = sample_prior_function(spec, grid, 7)
    assert f.values[0] == pytest.approx(f.values[1], abs=1e-3)


def test_prior_sample_input_validation():
    spec = KernelSpec()
    with pytest.raises(InputError):
        sample_prior_function(spec, np.empty((0, 1)), 0)
    with pytest.raises(InputError):
        sample_prior_function(spec, np.array([[0.0], [0.0]]), 0)


def test_tabulated_function_lookup():
    grid = np.array([[-1.0], [0.0], [1.0]])
    f = TabulatedFunction(grid, [3.0, 4.0, 5.0])
    assert f(np.array([0.0])) == 4.0
    assert f.shifted(-1.0)(np.array([1.0])) == 4.0
    assert f.max_abs() == 5.0
    with pytest.raises(InputError):
        f(np.array([0.5]))
