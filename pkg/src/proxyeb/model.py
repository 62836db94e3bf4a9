"""Domain types shared across the package.

Everything here is immutable after construction: array fields are copied and
flagged read-only so instances can be handed to worker processes freely.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

ORTHONORMAL_TOL = 1e-10


class DataError(ValueError):
    """Raised when input data violates a structural constraint.

    ``index`` is the offending row, when there is one.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConfigError(ValueError):
    """Raised for malformed or inconsistent run configuration."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AreaDataset:
    """Per-area binomial counts with optional covariates.

    Attributes
    ----------
    counts : (n,) int array
        Number of successes in each area.
    sample_sizes : (n,) int array
        Binomial sample size of each area.
    covariates : (n, p) float array
        Covariate matrix, ``p`` may be zero.
    covariate_names : tuple of str
        Column labels for ``covariates``.
    area_ids : tuple of str
        Identifiers used when writing estimates back out.
    """

    counts: np.ndarray
    sample_sizes: np.ndarray
    covariates: np.ndarray = None
    covariate_names: tuple = ()
    area_ids: tuple = ()

    def __post_init__(self):
        counts = np.asarray(self.counts)
        n = counts.shape[0] if counts.ndim == 1 else -1
        object.__setattr__(self, "counts", _frozen(self.counts, dtype=np.int64))
        object.__setattr__(self, "sample_sizes", _frozen(self.sample_sizes, dtype=np.int64))
        cov = self.covariates
        if cov is None:
            cov = np.zeros((max(n, 0), 0))
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 1:
            cov = cov[:, None]
        object.__setattr__(self, "covariates", _frozen(cov))
        names = tuple(self.covariate_names) or tuple(f"x{j + 1}" for j in range(cov.shape[1]))
        object.__setattr__(self, "covariate_names", names)
        ids = tuple(self.area_ids) or tuple(str(i + 1) for i in range(max(n, 0)))
        object.__setattr__(self, "area_ids", ids)

    @property
    def n(self) -> int:
        return int(self.counts.shape[0])

    @property
    def p(self) -> int:
        return int(self.covariates.shape[1])

    def covariate(self, name: str) -> np.ndarray:
        try:
            j = self.covariate_names.index(name)
        except ValueError:
            raise DataError(f"unknown covariate {name!r}; have {list(self.covariate_names)}") from None
        return self.covariates[:, j]


def validate_dataset(raw: AreaDataset) -> AreaDataset:
    """Check the invariants of ``raw`` and return it unchanged.

    Raises
    ------
    DataError
        Naming the index and the violated constraint of the first bad row.
    """
    counts, sizes, cov = raw.counts, raw.sample_sizes, raw.covariates
    if counts.ndim != 1 or sizes.ndim != 1:
        raise DataError("counts and sample sizes must be one-dimensional")
    if counts.shape != sizes.shape:
        raise DataError(
            f"counts has length {counts.shape[0]} but sample sizes has length {sizes.shape[0]}"
        )
    for i, (c, m) in enumerate(zip(counts.tolist(), sizes.tolist())):
        if m < 1:
            raise DataError(f"sample size below 1 at index {i}", i)
        if c < 0:
            raise DataError(f"negative count at index {i}", i)
        if c > m:
            raise DataError(f"count exceeds sample size at index {i}", i)
    if cov.shape[0] != counts.shape[0]:
        raise DataError(f"covariate matrix has {cov.shape[0]} rows, expected {counts.shape[0]}")
    bad = np.argwhere(~np.isfinite(cov))
    if bad.size:
        i, j = bad[0]
        raise DataError(f"non-finite covariate at index {i} (column {raw.covariate_names[j]})", int(i))
    if len(raw.area_ids) != counts.shape[0]:
        raise DataError("area id count does not match number of areas")
    return raw


@dataclass(frozen=True)
class AffineTransform:
    """The map ``y -> A y - B`` with ``A`` orthonormal.

    ``rotation=None`` stands for the identity matrix, which is what every
    covariate-driven transform uses; an explicit matrix is stored only when
    supplied.
    """

    shift: np.ndarray
    rotation: Optional[np.ndarray] = None

    def __post_init__(self):
        shift = _frozen(self.shift)
        if shift.ndim != 1:
            raise ValueError("shift must be a vector")
        object.__setattr__(self, "shift", shift)
        if self.rotation is not None:
            a = _frozen(self.rotation)
            n = shift.shape[0]
            if a.shape != (n, n):
                raise ValueError(f"rotation must be {n}x{n}, got {a.shape}")
            err = np.max(np.abs(a.T @ a - np.eye(n))) if n else 0.0
            if err > ORTHONORMAL_TOL:
                raise ValueError(f"rotation is not orthonormal (max |A'A - I| = {err:.3g})")
            object.__setattr__(self, "rotation", a)

    @classmethod
    def identity(cls, n: int) -> "AffineTransform":
        return cls(np.zeros(n))

    @property
    def n(self) -> int:
        return int(self.shift.shape[0])

    @property
    def is_shift(self) -> bool:
        return self.rotation is None

    def _check(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != self.shift.shape:
            raise ValueError(f"dimension mismatch: transform has n={self.n}, vector has shape {v.shape}")
        return v

    def apply(self, v) -> np.ndarray:
        v = self._check(v)
        if self.rotation is None:
            return v - self.shift
        return self.rotation @ v - self.shift

    def invert(self, v) -> np.ndarray:
        v = self._check(v)
        if self.rotation is None:
            return v + self.shift
        return self.rotation.T @ (v + self.shift)


class Rule(enum.Enum):
    NAIVE = "naive"
    REGRESSION = "regression"
    PEB = "peb"
    NPEB = "npeb"


FIXED_BANDWIDTH = 0.4


def default_bandwidth(n: int) -> float:
    """Bandwidth ``1/sqrt(log n)`` recommended for the kernel rule."""
    if n < 2:
        raise ValueError("need n >= 2 for a bandwidth")
    return 1.0 / np.sqrt(np.log(n))


@dataclass(frozen=True)
class EstimatorKind:
    tag: Rule
    bandwidth: Optional[float] = None
    truncate: bool = False

    def __post_init__(self):
        tag = Rule(self.tag)
        object.__setattr__(self, "tag", tag)
        if tag is Rule.NPEB:
            if self.bandwidth is None or not self.bandwidth > 0:
                raise ValueError("NPEB requires a positive bandwidth")
            object.__setattr__(self, "bandwidth", float(self.bandwidth))
        elif self.bandwidth is not None or self.truncate:
            raise ValueError(f"bandwidth/truncate only apply to NPEB, not {tag.value}")

    @classmethod
    def naive(cls):
        return cls(Rule.NAIVE)

    @classmethod
    def regression(cls):
        return cls(Rule.REGRESSION)

    @classmethod
    def peb(cls):
        return cls(Rule.PEB)

    @classmethod
    def npeb(cls, bandwidth: float = FIXED_BANDWIDTH, truncate: bool = False):
        return cls(Rule.NPEB, bandwidth, truncate)

    def __str__(self):
        if self.tag is Rule.NPEB:
            return f"npeb(h={self.bandwidth:g}{', truncate' if self.truncate else ''})"
        return self.tag.value


@dataclass(frozen=True)
class RiskEntry:
    transform_id: str
    estimator: EstimatorKind
    risk: float
    raw_risk: float
    transform: AffineTransform = field(repr=False, compare=False, default=None)


@dataclass(frozen=True)
class RiskReport:
    """Estimated risk for each candidate transform and the chosen one."""

    entries: tuple
    selected: int

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.entries:
            raise ValueError("a risk report needs at least one entry")

    @classmethod
    def from_entries(cls, entries: Sequence[RiskEntry]) -> "RiskReport":
        entries = tuple(entries)
        if not entries:
            raise ValueError("a risk report needs at least one entry")
        best = min(range(len(entries)), key=lambda k: (entries[k].risk, entries[k].transform_id))
        return cls(entries, best)

    @property
    def best(self) -> RiskEntry:
        return self.entries[self.selected]
