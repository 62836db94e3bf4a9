"""Empirical Bayes estimation of many normal means with covariate proxies.

Covariates enter through affine transforms ``z = A y - B``; a shrinkage rule
(parametric or kernel-based nonparametric) runs on ``z`` and the result is
mapped back. Candidate transforms are ranked by an estimate of their risk.
"""

from .estimators import (
    KernelDensityEval,
    kernel_eval,
    naive_estimate,
    npeb_estimate,
    peb_factor,
    peb_shrink,
    regression_estimate,
)
from .model import (
    FIXED_BANDWIDTH,
    AffineTransform,
    AreaDataset,
    ConfigError,
    DataError,
    EstimatorKind,
    RiskEntry,
    RiskReport,
    Rule,
    default_bandwidth,
    validate_dataset,
)
from .risk import (
    CandidateSet,
    apply_rule,
    npeb_risk_estimate,
    npeb_risk_raw,
    oracle_bayes_risk,
    peb_risk_estimate,
    select_transform,
    three_step_estimate,
    transformed_rule,
)
from .simulation import (
    MethodSpec,
    Population,
    PopulationParams,
    Recipe,
    RiskTable,
    ScenarioConfig,
    apply_temporal_scenario,
    generate_population,
    preset,
    run_scenario,
    simulate_replication,
)
from .transforms import (
    arcsin_forward,
    arcsin_inverse,
    ols_coefficients,
    ols_residual_transform,
    shift_transform,
)

__version__ = "0.1.0"
