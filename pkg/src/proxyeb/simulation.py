"""Synthetic small-area populations and the Monte Carlo scenario engine.

A population fixes the true proportions ``p`` of every area, the sub-quarter
each area belongs to, and the proportions ``p_temporal`` / ``p_spatial``
behind the historical and neighbourhood samples. One replication draws

* ``Y~ ~ Bin(m, p)`` for the current sample,
* ``T~ ~ Bin(3m, p_temporal)`` for the previous three years,
* ``S~ ~ Bin(4m, p_spatial)`` for the neighbourhood,

stabilizes them, runs every configured method on the same draws and records
``sum((p_hat - p)**2)`` per method.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .model import AffineTransform, ConfigError, DataError, EstimatorKind, Rule
from .risk import CandidateSet, three_step_estimate
from .transforms import arcsin_forward, arcsin_inverse, shift_transform

TEMPORAL_POOL = 3
SPATIAL_POOL = 4

SCENARIOS = ("temporal", "spatial", "combined")
CHANGES = ("none", "abrupt")

_POP_STREAM = 0
_REP_STREAM = 1
_REDRAW_STREAM = 2


# --------------------------------------------------------------------------
# Populations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PopulationParams:
    """Random-effects model for synthetic proportions.

    ``p_i = clip(mean + u_q(i) + e_i, lower, upper)`` with sub-quarter effects
    ``u_q ~ N(0, icc * sd**2)`` and area effects ``e_i ~ N(0, (1 - icc) * sd**2)``.
    The first ``protect`` areas are redrawn until ``p_i > protect_above``.
    """

    n: int = 161
    mean: float = 0.75
    sd: float = 0.13
    icc: float = 0.45
    lower: float = 0.05
    upper: float = 0.98
    group_size: int = 5
    protect: int = 16
    protect_above: float = 0.3

    def __post_init__(self):
        if not 0.0 < self.lower < self.mean < self.upper < 1.0:
            raise ConfigError("need 0 < lower < mean < upper < 1")
        if self.sd < 0 or not 0.0 <= self.icc <= 1.0:
            raise ConfigError("sd must be non-negative and icc in [0, 1]")
        if self.group_size < 2 or self.n < 2 * self.group_size:
            raise ConfigError("need group_size >= 2 and at least two sub-quarters")
        if not 0 <= self.protect <= self.n:
            raise ConfigError("protect must be between 0 and n")

    def group_sizes(self) -> list:
        """Sub-quarter sizes: ``group_size`` each, the remainder spread over the last groups."""
        k, extra = divmod(self.n, self.group_size)
        sizes = [self.group_size] * k
        for j in range(extra):
            sizes[-1 - (j % k)] += 1
        return sizes


@dataclass(frozen=True)
class Population:
    p: np.ndarray
    subquarter: np.ndarray
    p_spatial: np.ndarray
    p_temporal: np.ndarray
    area_ids: tuple = ()

    def __post_init__(self):
        for name in ("p", "p_spatial", "p_temporal"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        sq = np.array(self.subquarter)
        sq.setflags(write=False)
        object.__setattr__(self, "subquarter", sq)
        if not self.area_ids:
            object.__setattr__(self, "area_ids", tuple(str(i + 1) for i in range(self.n)))

    @property
    def n(self) -> int:
        return int(self.p.shape[0])

    @classmethod
    def from_proportions(cls, p, subquarter, area_ids=()) -> "Population":
        """Build a population, deriving neighbourhood proportions from the partition."""
        p = np.asarray(p, dtype=float)
        sq = np.asarray(subquarter)
        if p.shape != sq.shape or p.ndim != 1:
            raise DataError("proportions and sub-quarter labels must be vectors of equal length")
        bad = np.flatnonzero((p <= 0) | (p >= 1))
        if bad.size:
            raise DataError(f"proportion outside (0, 1) at index {bad[0]}")
        return cls(p, sq, neighbourhood_mean(p, sq), p, tuple(area_ids))


def neighbourhood_mean(p: np.ndarray, subquarter: np.ndarray) -> np.ndarray:
    """Mean of ``p`` over the other areas of each area's sub-quarter."""
    labels, inv, sizes = np.unique(subquarter, return_inverse=True, return_counts=True)
    lonely = np.flatnonzero(sizes < 2)
    if lonely.size:
        raise DataError(f"sub-quarter {labels[lonely[0]]!r} has a single area, no neighbourhood")
    totals = np.bincount(inv, weights=p)
    return (totals[inv] - p) / (sizes[inv] - 1)


def generate_population(params: PopulationParams, rng: np.random.Generator) -> Population:
    sizes = params.group_sizes()
    groups = np.repeat(np.arange(len(sizes)), sizes)
    sd_between = params.sd * math.sqrt(params.icc)
    sd_within = params.sd * math.sqrt(1.0 - params.icc)
    u = rng.normal(0.0, sd_between, len(sizes))
    e = rng.normal(0.0, sd_within, params.n)
    p = np.clip(params.mean + u[groups] + e, params.lower, params.upper)
    for i in range(params.protect):
        for _ in range(10_000):
            if p[i] > params.protect_above:
                break
            p[i] = np.clip(params.mean + u[groups[i]] + rng.normal(0.0, sd_within), params.lower, params.upper)
        else:
            raise ConfigError(f"could not draw p > {params.protect_above} for area {i}")
    return Population.from_proportions(p, groups)


def apply_temporal_scenario(pop: Population, change: str, count: int = 16, value: float = 0.3) -> Population:
    """Return a copy of ``pop`` with historical proportions set for ``change``.

    ``"none"`` copies ``p``; ``"abrupt"`` sets the first ``count`` areas to
    ``value`` and copies ``p`` elsewhere.
    """
    if change == "none":
        return replace(pop, p_temporal=pop.p)
    if change != "abrupt":
        raise ConfigError(f"unknown temporal change {change!r}; expected one of {CHANGES}")
    if count > pop.n:
        raise ConfigError(f"abrupt change count {count} exceeds n={pop.n}")
    low = np.flatnonzero(pop.p[:count] <= value)
    if low.size:
        raise DataError(f"area index {low[0]} has p <= {value}; an abrupt drop needs p > {value}")
    pt = pop.p.copy()
    pt[:count] = value
    return replace(pop, p_temporal=pt)


# --------------------------------------------------------------------------
# Methods
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Recipe:
    """How a method builds its candidate transforms.

    String forms: ``identity``, ``ols``, ``shift:T``, ``shift:0.3*S+0.7*T``,
    and ``|``-separated lists of those for selection among several.
    """

    kind: str
    weights: tuple = ()
    options: tuple = ()

    @classmethod
    def parse(cls, text: str) -> "Recipe":
        text = text.strip()
        if "|" in text:
            return cls("select", options=tuple(cls.parse(t) for t in text.split("|")))
        if text in ("identity", "ols"):
            return cls(text)
        if text.startswith("shift:"):
            terms = []
            for term in text[len("shift:"):].split("+"):
                term = term.strip()
                if "*" in term:
                    w, name = term.split("*", 1)
                    try:
                        weight = float(w)
                    except ValueError:
                        raise ConfigError(f"bad weight {w!r} in recipe {text!r}") from None
                else:
                    weight, name = 1.0, term
                if not name.strip():
                    raise ConfigError(f"empty covariate name in recipe {text!r}")
                terms.append((name.strip(), weight))
            return cls("shift", tuple(terms))
        raise ConfigError(f"unknown transform recipe {text!r}")

    def __str__(self):
        if self.kind == "select":
            return "|".join(str(o) for o in self.options)
        if self.kind == "shift":
            return "shift:" + "+".join(f"{w:g}*{n}" for n, w in self.weights)
        return self.kind

    def names(self) -> set:
        if self.kind == "select":
            return set().union(*(o.names() for o in self.options))
        return {n for n, _ in self.weights}

    def candidates(self, covariates: dict, design: np.ndarray, design_names=None) -> CandidateSet:
        if self.kind == "ols":
            return CandidateSet.ols_span(design, design_names)
        pairs = []
        use_ols = False
        for r in self.options if self.kind == "select" else (self,):
            if r.kind == "ols":
                use_ols = True
            elif r.kind == "identity":
                pairs.append(("identity", AffineTransform.identity(design.shape[0])))
            elif r.kind == "shift":
                missing = [n for n, _ in r.weights if n not in covariates]
                if missing:
                    raise ConfigError(f"recipe {r} uses unknown covariate {missing[0]!r}")
                t = shift_transform([covariates[n] for n, _ in r.weights], [w for _, w in r.weights])
                pairs.append((str(r), t))
            else:
                raise ConfigError(f"nested selection in recipe {self}")
        if use_ols:
            return CandidateSet.ols_span(design, design_names, extra=pairs)
        return CandidateSet.explicit(pairs)


@dataclass(frozen=True)
class MethodSpec:
    label: str
    estimator: EstimatorKind
    recipe: Recipe = Recipe("identity")


def estimate_proportions(method: MethodSpec, counts, m, y, covariates: dict, design) -> np.ndarray:
    """Proportion estimates of one method for one set of stabilized draws.

    Naive returns the raw sample proportion; every other method estimates the
    stabilized means through the three-step scheme and back-transforms.
    """
    if method.estimator.tag is Rule.NAIVE:
        return np.asarray(counts, dtype=float) / m
    cands = method.recipe.candidates(covariates, design)
    mu_hat = three_step_estimate(cands, y, method.estimator)
    return arcsin_inverse(mu_hat, m)


def default_methods(scenario: str, bandwidth: float = 0.4, truncate: bool = False) -> tuple:
    """Method rosters of the published comparison tables."""
    npeb = EstimatorKind.npeb(bandwidth, truncate)
    head = [
        MethodSpec("Naive", EstimatorKind.naive()),
        MethodSpec("Reg", EstimatorKind.regression(), Recipe("ols")),
        MethodSpec("NPEB1", npeb, Recipe("ols")),
    ]
    if scenario == "temporal":
        return tuple(head + [
            MethodSpec("NPEB2", npeb, Recipe.parse("shift:T")),
            MethodSpec("PEB", EstimatorKind.peb(), Recipe("ols")),
        ])
    if scenario == "spatial":
        return tuple(head + [
            MethodSpec("NPEB2", npeb, Recipe.parse("shift:S")),
            MethodSpec("PEB", EstimatorKind.peb(), Recipe("ols")),
            MethodSpec("NPEB0", npeb, Recipe("identity")),
        ])
    if scenario == "combined":
        mixes = [(f"NPEB{k + 2}", a) for k, a in enumerate((0.0, 0.3, 0.6))]
        return tuple(head + [
            MethodSpec(lab, npeb, Recipe.parse(f"shift:{a:g}*S+{1 - a:g}*T")) for lab, a in mixes
        ] + [MethodSpec("PEB", EstimatorKind.peb(), Recipe("ols"))])
    raise ConfigError(f"unknown scenario {scenario!r}")


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "temporal"
    temporal_change: str = "none"
    m_values: tuple = (25, 50, 100)
    replications: int = 1000
    seed: int = 0
    methods: tuple = ()
    population: Union[PopulationParams, str] = field(default_factory=PopulationParams)
    redraw_population: bool = False
    workers: int = 1
    name: str = ""

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.temporal_change not in CHANGES:
            raise ConfigError(f"unknown temporal change {self.temporal_change!r}; expected one of {CHANGES}")
        object.__setattr__(self, "m_values", tuple(int(m) for m in self.m_values))
        if not self.m_values or any(m < 1 for m in self.m_values):
            raise ConfigError("every m must be at least 1")
        if int(self.replications) < 1:
            raise ConfigError(f"replications must be at least 1, got {self.replications}")
        if int(self.seed) < 0 or int(self.seed) >= 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if int(self.workers) < 1:
            raise ConfigError("workers must be at least 1")
        if self.redraw_population and not isinstance(self.population, PopulationParams):
            raise ConfigError("redraw_population needs a synthetic population")
        if not self.methods:
            object.__setattr__(self, "methods", default_methods(self.scenario))
        labels = [mth.label for mth in self.methods]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate method labels: {labels}")
        active = set(self.covariate_names)
        for mth in self.methods:
            unknown = mth.recipe.names() - active
            if unknown:
                raise ConfigError(
                    f"method {mth.label} uses covariate {sorted(unknown)[0]!r} not active in {self.scenario}"
                )

    @property
    def covariate_names(self) -> tuple:
        return {"temporal": ("T",), "spatial": ("S",), "combined": ("T", "S")}[self.scenario]

    @property
    def effective_change(self) -> str:
        return "none" if self.scenario == "spatial" else self.temporal_change


PRESETS = {
    "table1": dict(scenario="temporal", temporal_change="none"),
    "table2": dict(scenario="temporal", temporal_change="abrupt"),
    "table3": dict(scenario="spatial", temporal_change="none"),
    "table4": dict(scenario="combined", temporal_change="abrupt"),
}


def preset(name: str, bandwidth: float = 0.4, truncate: bool = False, **overrides) -> ScenarioConfig:
    """Configuration reproducing one of the four published tables."""
    try:
        base = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None
    kw = dict(base, name=name, methods=default_methods(base["scenario"], bandwidth, truncate))
    kw.update(overrides)
    return ScenarioConfig(**kw)


# --------------------------------------------------------------------------
# Replications
# --------------------------------------------------------------------------

def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class Draws:
    """Binomial counts of one replication, shared by every method."""

    counts: np.ndarray
    temporal: np.ndarray
    spatial: np.ndarray


def draw_counts(pop: Population, m: int, rng: np.random.Generator) -> Draws:
    # Draw order is fixed so every scenario consumes the stream identically.
    y = rng.binomial(m, pop.p)
    t = rng.binomial(TEMPORAL_POOL * m, pop.p_temporal)
    s = rng.binomial(SPATIAL_POOL * m, pop.p_spatial)
    return Draws(y, t, s)


def simulate_replication(
    pop: Population,
    config: ScenarioConfig,
    m: int,
    rng: np.random.Generator,
    hook: Optional[Callable[[str, Draws], None]] = None,
) -> np.ndarray:
    """Squared-error loss of every configured method on one set of draws.

    ``hook(label, draws)`` is called before each method runs; it exists so
    callers can confirm all methods saw identical draws.
    """
    draws = draw_counts(pop, m, rng)
    y = arcsin_forward(draws.counts, m)
    all_cov = {
        "T": arcsin_forward(draws.temporal, m, TEMPORAL_POOL),
        "S": arcsin_forward(draws.spatial, m, SPATIAL_POOL),
    }
    covariates = {k: all_cov[k] for k in config.covariate_names}
    design = np.column_stack([np.ones(pop.n)] + [covariates[k] for k in config.covariate_names])
    losses = np.empty(len(config.methods))
    for j, method in enumerate(config.methods):
        if hook is not None:
            hook(method.label, draws)
        p_hat = estimate_proportions(method, draws.counts, m, y, covariates, design)
        err = p_hat - pop.p
        losses[j] = err @ err
    return losses


def scenario_population(config: ScenarioConfig, rng: Optional[np.random.Generator] = None) -> Population:
    """The fixed population a scenario is evaluated on."""
    if isinstance(config.population, PopulationParams):
        if rng is None:
            rng = _rng(config.seed, _POP_STREAM)
        pop = generate_population(config.population, rng)
    else:
        from .io import read_population_csv

        pop = read_population_csv(config.population)
    return apply_temporal_scenario(pop, config.effective_change)


def _replicate_range(config: ScenarioConfig, pop: Optional[Population], m: int, reps: range) -> np.ndarray:
    out = np.empty((len(reps), len(config.methods)))
    for k, r in enumerate(reps):
        this_pop = pop
        if config.redraw_population:
            this_pop = scenario_population(config, _rng(config.seed, _REDRAW_STREAM, m, r))
        out[k] = simulate_replication(this_pop, config, m, _rng(config.seed, _REP_STREAM, m, r))
    return out


def _replicate_chunk(args):
    return _replicate_range(*args)


@dataclass(frozen=True)
class RiskTable:
    """Monte Carlo risk ``E sum((p_hat - p)**2)`` per sample size and method."""

    m_values: tuple
    labels: tuple
    mean: np.ndarray
    se: np.ndarray
    losses: tuple = field(repr=False, default=())
    replications: int = 0
    title: str = ""

    def cell(self, m: int, label: str) -> tuple:
        i, j = self.m_values.index(m), self.labels.index(label)
        return float(self.mean[i, j]), float(self.se[i, j])

    def diff(self, m: int, a: str, b: str) -> tuple:
        """Mean and paired standard error of ``loss[a] - loss[b]`` at ``m``."""
        i = self.m_values.index(m)
        d = self.losses[i][:, self.labels.index(a)] - self.losses[i][:, self.labels.index(b)]
        return float(d.mean()), _se(d)

    def to_csv(self) -> str:
        from .io import table_to_csv

        return table_to_csv(self)

    def to_markdown(self) -> str:
        from .io import table_to_markdown

        return table_to_markdown(self)


def _se(x: np.ndarray) -> float:
    if x.shape[0] < 2:
        return 0.0
    return float(np.std(x, ddof=1) / math.sqrt(x.shape[0]))


def run_scenario(config: ScenarioConfig, population: Optional[Population] = None) -> RiskTable:
    """Average replication losses for every ``m`` in the configuration.

    The population is drawn once (from the master seed) and held fixed over
    all replications and sample sizes unless ``redraw_population`` is set.
    Replication ``r`` at sample size ``m`` draws from its own stream keyed on
    ``(seed, m, r)``, so results do not depend on ``workers``.
    """
    pop = None
    if not config.redraw_population:
        pop = population if population is not None else scenario_population(config)
    R = int(config.replications)
    means, ses, losses = [], [], []
    for m in config.m_values:
        if config.workers > 1:
            step = math.ceil(R / config.workers)
            chunks = [(config, pop, m, range(a, min(a + step, R))) for a in range(0, R, step)]
            with ProcessPoolExecutor(config.workers) as ex:
                block = np.vstack(list(ex.map(_replicate_chunk, chunks)))
        else:
            block = _replicate_range(config, pop, m, range(R))
        block.setflags(write=False)
        losses.append(block)
        means.append(block.mean(axis=0))
        ses.append([_se(block[:, j]) for j in range(block.shape[1])])
    return RiskTable(
        config.m_values,
        tuple(mth.label for mth in config.methods),
        np.array(means),
        np.array(ses),
        tuple(losses),
        R,
        config.name,
    )


def naive_analytic_risk(p, m) -> float:
    """Exact risk ``sum(p (1 - p)) / m`` of the sample proportions."""
    p = np.asarray(p, dtype=float)
    return float(np.sum(p * (1.0 - p)) / m)
