import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_kernel, normal_equations, two_point_bayes_mse
from proxyeb.estimators import (
    DENSITY_FLOOR,
    kernel_eval,
    naive_estimate,
    npeb_estimate,
    peb_factor,
    peb_shrink,
    regression_estimate,
)
from proxyeb.model import AreaDataset


def test_naive_estimate():
    ds = AreaDataset([12, 0, 50], [25, 50, 50])
    np.testing.assert_array_equal(naive_estimate(ds), [0.48, 0.0, 1.0])


def test_regression_intercept_and_saturated():
    y = np.array([2.0, 3.0, 7.0])
    np.testing.assert_allclose(regression_estimate(np.ones(3), y), np.full(3, 4.0), atol=1e-14)
    X = np.array([[2.0, 1.0, 0.0], [0.0, 1.0, 1.0], [1.0, 0.0, 3.0]])
    np.testing.assert_allclose(regression_estimate(X, y), y, atol=1e-12)


def test_regression_against_normal_equations():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((10, 2))
    y = rng.standard_normal(10)
    np.testing.assert_allclose(regression_estimate(X, y), X @ normal_equations(X, y), atol=1e-8)


def test_peb_zero_and_half():
    n = 8
    z = np.ones(n)  # sum z^2 = n
    np.testing.assert_array_equal(peb_shrink(z), np.zeros(n))
    z = np.full(n, math.sqrt(2.0))  # sum z^2 = 2n
    assert peb_factor(z) == pytest.approx(0.5, abs=1e-15)
    np.testing.assert_allclose(peb_shrink(z), z / 2, atol=1e-15)


def test_peb_factor_law_of_large_numbers():
    z = np.random.default_rng(5).normal(0.0, math.sqrt(5.0), 10_000)
    assert abs(peb_factor(z) - 0.8) < 0.02


@settings(max_examples=60, deadline=None)
@given(arrays(float, st.integers(2, 40), elements=st.floats(-50, 50)))
def test_peb_factor_bounds(z):
    k = peb_factor(z)
    assert 0.0 <= k < 1.0
    assert np.linalg.norm(peb_shrink(z)) <= np.linalg.norm(z) + 1e-12


def test_kernel_point_mass():
    h = 0.7
    ev = kernel_eval(np.zeros(4), h)
    np.testing.assert_allclose(ev.f_hat, 1 / (h * math.sqrt(2 * math.pi)), atol=1e-15)
    np.testing.assert_array_equal(ev.f_prime_hat, 0.0)


def test_kernel_symmetric_pair():
    ev = kernel_eval(np.array([-1.3, 1.3]), 0.5, at=np.array([0.0]))
    assert ev.f_prime_hat[0] == pytest.approx(0.0, abs=1e-15)


def test_kernel_matches_double_loop():
    z = np.array([-0.8, 0.1, 0.35, 1.9, 2.2])
    ev = kernel_eval(z, 0.4)
    f, fp = brute_kernel(z, 0.4)
    np.testing.assert_allclose(ev.f_hat, f, atol=1e-12, rtol=0)
    np.testing.assert_allclose(ev.f_prime_hat, fp, atol=1e-12, rtol=0)


def test_kernel_leave_one_out():
    z = np.array([-1.0, 0.2, 0.5, 3.0])
    h = 0.6
    ev = kernel_eval(z, h, leave_one_out=True)
    for i in range(len(z)):
        rest = np.delete(z, i)
        u = (z[i] - rest) / h
        phi = np.exp(-u * u / 2) / math.sqrt(2 * math.pi)
        assert ev.f_hat[i] == pytest.approx(max(phi.sum() / (3 * h), DENSITY_FLOOR), rel=1e-13)
        assert ev.f_prime_hat[i] == pytest.approx((-u * phi).sum() / (3 * h * h), rel=1e-12, abs=1e-15)


def test_kernel_blocks_agree_with_single_pass():
    z = np.random.default_rng(0).standard_normal(2500)
    at = z[:7]
    full = kernel_eval(z, 0.3)
    part = kernel_eval(z, 0.3, at=at)
    np.testing.assert_allclose(full.f_hat[:7], part.f_hat, rtol=1e-13)
    np.testing.assert_allclose(full.f_prime_hat[:7], part.f_prime_hat, rtol=1e-12)


def test_kernel_density_integrates_to_one():
    z = np.random.default_rng(1).standard_normal(60) * 2
    h = 0.4
    grid = np.arange(z.min() - 6, z.max() + 6 + h / 40, h / 20)
    ev = kernel_eval(z, h, at=grid)
    assert np.trapezoid(ev.f_hat, grid) == pytest.approx(1.0, abs=1e-3)


def test_kernel_floor():
    ev = kernel_eval(np.array([0.0, 0.1]), 0.1, at=np.array([100.0]))
    assert ev.f_hat[0] == DENSITY_FLOOR


def test_npeb_constant_input():
    z = np.full(9, 2.5)
    np.testing.assert_allclose(npeb_estimate(z, 0.4), z, atol=1e-15)


def test_npeb_antisymmetric_pair():
    out = npeb_estimate(np.array([-1.7, 1.7]), 0.4)
    assert out[0] == pytest.approx(-out[1], abs=1e-14)


def test_npeb_two_point_prior():
    rng = np.random.default_rng(2024)
    n = 2000
    nu = np.where(rng.random(n) < 0.5, -3.0, 3.0)
    z = nu + rng.standard_normal(n)
    mse = np.mean((npeb_estimate(z, 0.4) - nu) ** 2)
    bayes = two_point_bayes_mse(3.0)
    assert bayes == pytest.approx(0.03736, abs=1e-5)
    assert bayes - 0.02 < mse < 0.55


@settings(max_examples=40, deadline=None)
@given(arrays(float, st.integers(2, 30), elements=st.floats(-20, 20)), st.floats(-100, 100),
       st.floats(0.1, 2.0))
def test_npeb_shift_equivariance(z, c, h):
    np.testing.assert_allclose(npeb_estimate(z + c, h), npeb_estimate(z, h) + c, atol=1e-10, rtol=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 25))
def test_truncation_caps_the_correction(seed, n):
    z = np.random.default_rng(seed).standard_normal(n) * 2
    h = 0.05
    cap = 2 * math.log(n)
    step = npeb_estimate(z, h, truncate=True) - z
    assert np.max(np.abs(step)) <= cap
    free = npeb_estimate(z, h) - z
    big = np.abs(free) > cap
    np.testing.assert_allclose(step[big], np.sign(free[big]) * cap, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(step[~big], free[~big])
