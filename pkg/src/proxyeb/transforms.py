"""Variance stabilization and construction of candidate affine transforms."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .model import AffineTransform, DataError

RANK_TOL = 1e-10


def arcsin_forward(counts, m, pool: int = 1) -> np.ndarray:
    """Map binomial counts to approximately unit-variance normal scores.

    Computes ``sqrt(4 m) * arcsin(sqrt((c + 0.25) / (pool * m + 0.5)))``.
    The leading factor always uses the base size ``m``, so a count pooled over
    ``pool * m`` trials lands on the same scale as a count over ``m`` trials.

    Parameters
    ----------
    counts : array_like of int
    m : int or array_like of int
        Base sample size, scalar or per area.
    pool : int
        Multiplier on ``m`` giving the number of trials behind ``counts``.
    """
    c = np.asarray(counts, dtype=float)
    m = np.asarray(m, dtype=float)
    if pool < 1:
        raise DataError(f"pool multiplier must be a positive integer, got {pool}")
    if np.any(m < 1):
        raise DataError("sample size must be at least 1")
    trials = pool * m
    bad = np.flatnonzero(np.broadcast_to((c < 0) | (c > trials), c.shape))
    if bad.size:
        i = int(bad[0])
        raise DataError(f"count out of range [0, {pool}*m] at index {i}")
    return np.sqrt(4.0 * m) * np.arcsin(np.sqrt((c + 0.25) / (trials + 0.5)))


def arcsin_inverse(mu_hat, m) -> np.ndarray:
    """Back-transform normal-scale estimates to proportions.

    Values whose angle ``mu / sqrt(4 m)`` leaves ``[0, pi/2]`` are clamped to
    the boundary first, so the output always lies in ``[0, 1]``.
    """
    m = np.asarray(m, dtype=float)
    if np.any(m < 1):
        raise DataError("sample size must be at least 1")
    angle = np.clip(np.asarray(mu_hat, dtype=float) / np.sqrt(4.0 * m), 0.0, np.pi / 2)
    return np.sin(angle) ** 2


def ols_coefficients(X, y, names: Optional[Sequence[str]] = None) -> np.ndarray:
    """Least-squares coefficients through a column-pivoted QR factorization.

    Raises
    ------
    DataError
        If ``X`` is not of full column rank; the message names the first column
        the pivoting identifies as linearly dependent on the others.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if y.shape != (n,):
        raise DataError(f"response has shape {y.shape}, design has {n} rows")
    if p < 1:
        raise DataError("design matrix has no columns")
    if n < p:
        raise DataError(f"design has more columns ({p}) than rows ({n})")
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    sv = np.linalg.svd(R, compute_uv=False)
    rank = int(np.sum(sv > RANK_TOL * sv[0])) if sv[0] > 0 else 0
    if rank < p:
        j = int(piv[rank])
        label = names[j] if names is not None else f"column {j}"
        raise DataError(f"design matrix is rank deficient (rank {rank} < {p}); {label} is linearly dependent")
    coef_piv = scipy.linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(p)
    beta[piv] = coef_piv
    return beta


def ols_residual_transform(X, y, names: Optional[Sequence[str]] = None) -> AffineTransform:
    """Shift transform whose shift is the least-squares fit of ``y`` on ``X``.

    Applying it to ``y`` yields the OLS residuals.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    beta = ols_coefficients(X, y, names)
    return AffineTransform(X @ beta)


def shift_transform(columns: Sequence, weights: Sequence[float]) -> AffineTransform:
    """Shift transform with ``B = sum_k weights[k] * columns[k]``."""
    if len(columns) != len(weights):
        raise ValueError(f"{len(columns)} columns but {len(weights)} weights")
    if not columns:
        raise ValueError("need at least one column")
    cols = [np.asarray(c, dtype=float) for c in columns]
    n = cols[0].shape
    if any(c.shape != n for c in cols):
        raise ValueError("covariate columns differ in length")
    b = np.zeros(n)
    for w, c in zip(weights, cols):
        b = b + float(w) * c
    return AffineTransform(b)
