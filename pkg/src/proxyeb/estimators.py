"""Decision rules applied on the normal scale.

``peb_shrink`` and ``npeb_estimate`` act on a transformed vector ``z`` with
unit noise variance; ``naive_estimate`` and ``regression_estimate`` are the
covariate-free and covariate-only baselines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import AreaDataset
from .transforms import ols_coefficients

DENSITY_FLOOR = 1e-12
_SQRT_2PI = np.sqrt(2.0 * np.pi)
_BLOCK = 1024


@dataclass(frozen=True)
class KernelDensityEval:
    f_hat: np.ndarray
    f_prime_hat: np.ndarray
    bandwidth: float

    @property
    def score(self) -> np.ndarray:
        """Estimated log-density derivative ``f'/f``."""
        return self.f_prime_hat / self.f_hat


def naive_estimate(data: AreaDataset) -> np.ndarray:
    """Sample proportion in each area."""
    return data.counts / data.sample_sizes


def regression_estimate(X, y) -> np.ndarray:
    """Least-squares fitted values ``X beta_hat``, no shrinkage stage."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X @ ols_coefficients(X, y)


def peb_factor(z) -> float:
    """Shrinkage factor ``tau2 / (tau2 + 1)`` with the moment estimate of tau2."""
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    if n < 2:
        raise ValueError("parametric shrinkage needs n >= 2")
    tau2 = max(0.0, float(z @ z) / n - 1.0)
    return tau2 / (tau2 + 1.0)


def peb_shrink(z) -> np.ndarray:
    """Shrink ``z`` toward zero under a fitted ``N(0, tau2)`` prior."""
    return peb_factor(z) * np.asarray(z, dtype=float)


def kernel_eval(points, h: float, at=None, leave_one_out: bool = False) -> KernelDensityEval:
    """Normal-kernel estimates of the marginal density and its derivative.

    Parameters
    ----------
    points : (n,) array
        Sample defining the estimate.
    h : float
        Bandwidth.
    at : (k,) array, optional
        Evaluation points; defaults to ``points`` themselves.
    leave_one_out : bool
        Drop each point's own kernel when evaluating at the sample. Only valid
        when ``at`` is None.

    Notes
    -----
    The density is floored at ``DENSITY_FLOOR`` so that the score ratio stays
    finite far from the data.
    """
    z = np.asarray(points, dtype=float)
    n = z.shape[0]
    if n < 2:
        raise ValueError("kernel estimate needs n >= 2")
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    if leave_one_out and at is not None:
        raise ValueError("leave_one_out only applies when evaluating at the sample")
    x = z if at is None else np.asarray(at, dtype=float)
    denom = n - 1 if leave_one_out else n
    f = np.empty(x.shape[0])
    fp = np.empty(x.shape[0])
    for start in range(0, x.shape[0], _BLOCK):
        u = (x[start:start + _BLOCK, None] - z[None, :]) / h
        k = np.exp(-0.5 * u * u) / _SQRT_2PI
        if leave_one_out:
            rows = np.arange(k.shape[0])
            k[rows, rows + start] = 0.0
        f[start:start + _BLOCK] = k.sum(axis=1)
        fp[start:start + _BLOCK] = -(u * k).sum(axis=1)
    f /= denom * h
    fp /= denom * h * h
    return KernelDensityEval(np.maximum(f, DENSITY_FLOOR), fp, float(h))


def npeb_estimate(z, h: float, truncate: bool = False, leave_one_out: bool = False) -> np.ndarray:
    """Kernel plug-in for the normal Bayes rule ``z + f'(z)/f(z)``.

    With ``truncate`` the correction ``f'/f`` is capped at ``2 log n`` in
    absolute value.
    """
    z = np.asarray(z, dtype=float)
    step = kernel_eval(z, h, leave_one_out=leave_one_out).score
    if not truncate:
        return z + step
    cap = 2.0 * np.log(z.shape[0])
    out = z + np.clip(step, -cap, cap)
    # Rounding in z + cap can overshoot the cap by an ulp; step back toward z.
    over = np.abs(out - z) > cap
    while np.any(over):
        out[over] = np.nextafter(out[over], z[over])
        over = np.abs(out - z) > cap
    return out
