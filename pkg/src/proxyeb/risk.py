"""Risk estimates for candidate transforms and the three-step estimator.

For a transform ``T`` and rule ``D`` the combined estimator is
``T^{-1}(D(T(y)))``. Its risk at ``mu`` equals the risk of ``D`` alone at
``nu = T(mu)``, which is what the estimates below target: each one looks only
at ``z = T(y)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .estimators import kernel_eval, npeb_estimate, peb_shrink
from .model import AffineTransform, EstimatorKind, RiskEntry, RiskReport, Rule
from .transforms import ols_residual_transform

OLS_ID = "ols"
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def peb_risk_estimate(z) -> float:
    """Estimated total risk of parametric shrinkage on ``z``.

    ``max(0, n (S - n) / S)`` with ``S = sum(z**2)``; zero when ``S == 0``.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    if n < 1:
        raise ValueError("need at least one observation")
    s = float(z @ z)
    if s == 0.0:
        return 0.0
    return max(0.0, n * (s - n) / s)


def npeb_risk_raw(z, h: float) -> float:
    """Unclamped kernel estimate ``n - sum((f'/f)(z_i)**2)``."""
    z = np.asarray(z, dtype=float)
    score = kernel_eval(z, h).score
    return float(z.shape[0] - score @ score)


def npeb_risk_estimate(z, h: float) -> float:
    """Estimated total risk of the kernel rule on ``z``, clamped at zero."""
    return max(0.0, npeb_risk_raw(z, h))


def _fisher_integrand(x: np.ndarray, nu: np.ndarray) -> np.ndarray:
    # (f')^2 / f for f = mean_i phi(x - nu_i), evaluated in a scaled form so
    # points far from every nu_i underflow to zero instead of 0/0.
    out = np.empty(x.shape[0])
    block = max(1, 2_000_000 // max(nu.shape[0], 1))
    for start in range(0, x.shape[0], block):
        d = x[start:start + block, None] - nu[None, :]
        logk = -0.5 * d * d
        top = logk.max(axis=1, keepdims=True)
        w = np.exp(logk - top)
        sw = w.sum(axis=1)
        score = -(d * w).sum(axis=1) / sw
        f = np.exp(top[:, 0] - _LOG_SQRT_2PI) * sw / nu.shape[0]
        out[start:start + block] = f * score * score
    return out


def oracle_bayes_risk(nu, quadrature_tol: float = 1e-8, max_levels: int = 24) -> float:
    """Per-coordinate Bayes risk under the empirical distribution of ``nu``.

    Evaluates ``1 - integral (f')^2 / f`` for the exact mixture
    ``f(z) = mean_i phi(z - nu_i)`` by trapezoid quadrature on
    ``[min(nu) - 8, max(nu) + 8]``, halving the step until two successive
    refinements differ by less than ``quadrature_tol``. The result is clamped
    to ``[0, 1]``.
    """
    nu = np.asarray(nu, dtype=float).ravel()
    if nu.size == 0 or not np.all(np.isfinite(nu)):
        raise ValueError("nu must be a non-empty finite vector")
    lo, hi = nu.min() - 8.0, nu.max() + 8.0
    # Initial step of at most 1/2 keeps every unit-width bump sampled.
    k = max(2, int(np.ceil((hi - lo) / 0.5)))
    x = np.linspace(lo, hi, k + 1)
    step = (hi - lo) / k
    total = _fisher_integrand(x, nu).sum() - 0.5 * (_fisher_integrand(x[[0, -1]], nu).sum())
    integral = step * total
    for level in range(max_levels):
        mids = lo + step * (np.arange(k) + 0.5)
        total += _fisher_integrand(mids, nu).sum()
        k *= 2
        step /= 2
        refined = step * total
        done = abs(refined - integral) < quadrature_tol and level >= 1
        integral = refined
        if done:
            break
    return float(min(1.0, max(0.0, 1.0 - integral)))


@dataclass(frozen=True)
class CandidateSet:
    """Candidate transforms for selection.

    ``transforms`` is an explicit list of ``(id, AffineTransform)`` pairs.
    When ``design`` is given the set also spans ``{y - X beta}``; that member
    is represented by its least-squares fit under the id ``"ols"``, which is
    the exact minimizer for the parametric rule and the standard surrogate for
    the kernel rule.
    """

    transforms: tuple = ()
    design: Optional[np.ndarray] = None
    design_names: Optional[tuple] = None

    def __post_init__(self):
        pairs = tuple((str(i), t) for i, t in self.transforms)
        object.__setattr__(self, "transforms", pairs)
        ids = [i for i, _ in pairs]
        if self.design is not None:
            X = np.array(self.design, dtype=float)
            if X.ndim == 1:
                X = X[:, None]
            X.setflags(write=False)
            object.__setattr__(self, "design", X)
            ids.append(OLS_ID)
        if not ids:
            raise ValueError("candidate set is empty")
        if len(set(ids)) != len(ids):
            raise ValueError(f"candidate ids are not unique: {ids}")

    @classmethod
    def explicit(cls, transforms: Sequence) -> "CandidateSet":
        return cls(tuple(transforms))

    @classmethod
    def ols_span(cls, X, names: Optional[Sequence[str]] = None, extra: Sequence = ()) -> "CandidateSet":
        return cls(tuple(extra), X, tuple(names) if names is not None else None)

    @property
    def is_ols_span(self) -> bool:
        return self.design is not None

    def resolve(self, y) -> list:
        """Concrete ``(id, transform)`` pairs for the observed ``y``."""
        out = list(self.transforms)
        if self.design is not None:
            out.append((OLS_ID, ols_residual_transform(self.design, y, self.design_names)))
        return out


def apply_rule(estimator: EstimatorKind, z) -> np.ndarray:
    """Run the rule ``estimator`` on the transformed vector ``z``.

    Naive leaves ``z`` untouched; Regression estimates every ``nu_i`` by zero,
    so that after inverting the transform only the fitted shift remains.
    """
    z = np.asarray(z, dtype=float)
    tag = estimator.tag
    if tag is Rule.NAIVE:
        return z.copy()
    if tag is Rule.REGRESSION:
        return np.zeros_like(z)
    if tag is Rule.PEB:
        return peb_shrink(z)
    return npeb_estimate(z, estimator.bandwidth, truncate=estimator.truncate)


def transformed_rule(estimator: EstimatorKind, transform: AffineTransform, y) -> np.ndarray:
    """``T^{-1}(D(T(y)))`` for a fixed transform."""
    return transform.invert(apply_rule(estimator, transform.apply(y)))


def estimated_risk(estimator: EstimatorKind, z) -> tuple:
    """``(clamped, raw)`` risk estimate of ``estimator`` applied to ``z``."""
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    tag = estimator.tag
    if tag is Rule.PEB:
        r = peb_risk_estimate(z)
        return r, r
    if tag is Rule.NPEB:
        raw = npeb_risk_raw(z, estimator.bandwidth)
        return max(0.0, raw), raw
    if tag is Rule.NAIVE:
        return float(n), float(n)
    raw = float(z @ z) - n
    return max(0.0, raw), raw


def select_transform(candidates: CandidateSet, y, estimator: EstimatorKind) -> RiskReport:
    """Estimate the risk of every candidate and pick the smallest.

    Ties go to the lexicographically lowest transform id.
    """
    y = np.asarray(y, dtype=float)
    entries = []
    for tid, t in candidates.resolve(y):
        risk, raw = estimated_risk(estimator, t.apply(y))
        entries.append(RiskEntry(tid, estimator, risk, raw, t))
    return RiskReport.from_entries(entries)


def three_step_estimate(candidates: CandidateSet, y, estimator: EstimatorKind, return_report: bool = False):
    """Select a transform, apply the rule on its scale, and map back.

    Returns the estimate of the mean vector, and the selection report as a
    second value if ``return_report`` is set.
    """
    report = select_transform(candidates, y, estimator)
    mu_hat = transformed_rule(estimator, report.best.transform, y)
    if return_report:
        return mu_hat, report
    return mu_hat
