"""targetmeta: target-population treatment effects from collections of
randomized trials, with stratified-bootstrap uncertainty, an exact
identification oracle, and a Monte-Carlo simulation laboratory."""

__version__ = "0.1.0"

from .bootstrap import (
    BootstrapResult,
    EstimatorConfig,
    bootstrap_estimate,
    percentile_interval,
    sensitivity_intervals,
    stratified_resample,
)
from .data import Dataset, Observation, arm_sizes, validate_dataset
from .design import DesignMatrix, Interaction, Intercept, Main, ModelSpec, Power, build_design
from .estimators import (
    EstimateReport,
    WeightSet,
    estimate_pooled,
    estimate_study_specific_tate,
    estimate_two_stage,
    estimate_unadjusted,
    hajek_contrast,
    pooled_weights,
    positivity_summary,
    study_specific_weights,
    unadjusted_weights,
)
from .oracle import (
    DiscretePopulation,
    check_assumption_b4,
    random_population,
    tate_via_identification,
    true_tate_direct,
    violate_b4,
)
from .propensity import (
    FittedLogit,
    FittedMultinomial,
    FittedPropensities,
    fit_binomial_logit,
    fit_multinomial_logit,
    fit_propensities,
    odds_target_vs_study,
    predict_membership,
    predict_treatment,
)
from .rng import SeedTree, Stream
from .simlab import (
    PRESETS,
    BootstrapPlan,
    Scenario,
    SimMetrics,
    approximate_true_tate,
    compute_metrics,
    conditional_ate,
    generate_replicate,
    preset_scenario,
    run_simulation_study,
    solve_membership_intercepts,
)

__all__ = [name for name in dir() if not name.startswith("_")]
