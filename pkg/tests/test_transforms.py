import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import arcsin_mp, normal_equations
from proxyeb.model import DataError
from proxyeb.transforms import (
    arcsin_forward,
    arcsin_inverse,
    ols_coefficients,
    ols_residual_transform,
    shift_transform,
)

# Frozen from a 40-digit mpmath evaluation of the closed form (oracles.arcsin_mp).
ARCSIN_0_25 = 0.9917726107940236
ARCSIN_25_25 = 14.716190657154943


def test_frozen_values_match_oracle():
    assert arcsin_mp(0, 25) == pytest.approx(ARCSIN_0_25, abs=1e-15)
    assert arcsin_mp(25, 25) == pytest.approx(ARCSIN_25_25, abs=1e-14)


@pytest.mark.parametrize("c,expected", [(0, ARCSIN_0_25), (25, ARCSIN_25_25)])
def test_arcsin_forward_values(c, expected):
    assert arcsin_forward([c], 25)[0] == pytest.approx(expected, abs=1e-12)


def test_arcsin_forward_midpoint():
    # (c + 0.25)/(m + 0.5) = 1/2 at c = 12.5; the formula is smooth in c.
    assert arcsin_forward(np.array([12.5]), 25)[0] == pytest.approx(10 * np.pi / 4, abs=1e-12)


@pytest.mark.parametrize("pool", [1, 3, 4])
def test_pooled_counts_use_base_scale(pool):
    m, c = 30, 17
    assert arcsin_forward([c], m, pool)[0] == pytest.approx(arcsin_mp(c, m, pool), abs=1e-12)


def test_arcsin_forward_rejects_out_of_range():
    with pytest.raises(DataError, match="index 1"):
        arcsin_forward([3, 26], 25)
    with pytest.raises(DataError):
        arcsin_forward([-1], 25)
    arcsin_forward([75], 25, pool=3)


def test_arcsin_forward_strictly_increasing():
    for m, pool in [(25, 1), (50, 3), (100, 4)]:
        vals = arcsin_forward(np.arange(pool * m + 1), m, pool)
        assert np.all(np.diff(vals) > 0)


def test_arcsin_inverse_values():
    m = 25
    assert arcsin_inverse([np.sqrt(4 * m) * np.pi / 4], m)[0] == pytest.approx(0.5, abs=1e-15)
    assert arcsin_inverse([0.0], m)[0] == 0.0


def test_arcsin_round_trip():
    m = 40
    c = np.arange(m + 1)
    np.testing.assert_allclose(arcsin_inverse(arcsin_forward(c, m), m), (c + 0.25) / (m + 0.5), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e3, 1e3), st.integers(1, 500))
def test_arcsin_inverse_in_unit_interval(mu, m):
    p = arcsin_inverse([mu], m)[0]
    assert 0.0 <= p <= 1.0


def test_inverse_clamps_out_of_image():
    m = 25
    assert arcsin_inverse([-3.0], m)[0] == 0.0
    assert arcsin_inverse([100.0], m)[0] == 1.0


def test_ols_intercept_only():
    y = np.array([1.0, 4.0, -2.0, 7.0])
    t = ols_residual_transform(np.ones((4, 1)), y)
    np.testing.assert_allclose(t.shift, np.full(4, y.mean()), atol=1e-14)


def test_ols_saturated():
    rng = np.random.default_rng(3)
    X = np.eye(5) + 0.1 * rng.standard_normal((5, 5))
    y = rng.standard_normal(5)
    t = ols_residual_transform(X, y)
    np.testing.assert_allclose(t.shift, y, atol=1e-12)
    np.testing.assert_allclose(t.apply(y), 0.0, atol=1e-12)


def test_ols_small_case_against_normal_equations():
    X = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(ols_coefficients(X, y), normal_equations(X, y), atol=1e-12)
    np.testing.assert_allclose(ols_coefficients(X, y), [1.5, 1.5], atol=1e-12)


def test_rank_deficient_names_column():
    X = np.column_stack([np.ones(6), np.arange(6.0), 2 * np.arange(6.0)])
    with pytest.raises(DataError, match="rank deficient.*dependent"):
        ols_coefficients(X, np.arange(6.0), names=["one", "a", "b"])
    with pytest.raises(DataError, match="column"):
        ols_coefficients(X, np.arange(6.0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_residuals_orthogonal_and_minimal(seed, p):
    rng = np.random.default_rng(seed)
    n = 30
    X = rng.standard_normal((n, p))
    y = rng.standard_normal(n) * 3 + 1
    beta = ols_coefficients(X, y)
    z = ols_residual_transform(X, y).apply(y)
    np.testing.assert_allclose(X.T @ z, 0.0, atol=1e-8)
    best = z @ z
    for _ in range(100):
        other = beta + rng.standard_normal(p) * rng.choice([1e-3, 0.1, 1.0])
        r = y - X @ other
        assert best <= r @ r + 1e-9


def test_shift_transform():
    S = np.array([1.0, 2.0, 3.0])
    T = np.array([-1.0, 0.5, 4.0])
    np.testing.assert_array_equal(shift_transform([T], [1.0]).shift, T)
    np.testing.assert_array_equal(shift_transform([S, T], [0.0, 1.0]).shift, T)
    np.testing.assert_allclose(shift_transform([S, T], [0.3, 0.7]).shift, 0.3 * S + 0.7 * T, atol=1e-15)
    with pytest.raises(ValueError):
        shift_transform([S, T], [1.0])
    with pytest.raises(ValueError):
        shift_transform([S, T[:2]], [1.0, 1.0])
