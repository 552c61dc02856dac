"""Monte-Carlo laboratory: data generation, true-effect approximation, and
performance metrics for the estimator suite.

The generator draws a standard-normal covariate, assigns each unit to the
target population or one of m studies by a multinomial logistic model with
the target as baseline, randomizes treatment fairly within studies, draws
per-study outcome-model coefficients around the target coefficients, and
builds outcomes as

    y = nu_s + a * gamma_s + x * lambda_s + a * x * kappa_s + noise.

The target-population conditional effect at x is gamma_0 + kappa_0 * x, so
the true target average effect is gamma_0 + kappa_0 * E(X | target), which
is approximated by membership-only replications.

Built-in presets (m3s1, m3s2, m3s3, m30s1, m30s2, m30s3) cover three- and
thirty-study collections with similar or differing study sizes and with
effect heterogeneity driven mainly by the measured covariate (settings 1-2)
or by study-level shifts (setting 3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._parallel import indexed_map
from .bootstrap import EstimatorConfig, bootstrap_estimate
from .data import Dataset
from .design import ModelSpec
from .errors import (
    EstimationError,
    FitError,
    InterceptSolveError,
    TooFewEstimatesError,
    ValidationError,
)
from .estimators import ESTIMATOR_NAMES, estimate_suite
from .rng import SeedTree, Stream

__all__ = [
    "Scenario",
    "BootstrapPlan",
    "EstimatorMetrics",
    "SimMetrics",
    "PRESETS",
    "preset_scenario",
    "solve_membership_intercepts",
    "expected_source_sizes",
    "generate_replicate",
    "conditional_ate",
    "approximate_true_tate",
    "run_simulation_study",
    "compute_metrics",
]

# Target-population outcome coefficients (nu, gamma, lambda, kappa) and the
# coefficient-noise variances used by every built-in preset.
THETA_TARGET = (-1.0, -1.0, 0.5, -0.5)
VAR_NU = 0.5
VAR_LAMBDA = 0.5
MEASURED_HETEROGENEITY = (0.1, 2.0)  # (var gamma, var kappa), settings 1-2
UNMEASURED_HETEROGENEITY = (2.0, 0.1)  # setting 3

M3_SLOPES = (-0.4, -0.186, 0.0)
M3_INTERCEPTS_SIMILAR = (-1.347, -1.302, -1.299)
M3_INTERCEPTS_DIFFERENT = (-2.16, -1.414, -0.799)
M3_SIZES_SIMILAR = (1500.0, 1500.0, 1500.0)
M3_SIZES_DIFFERENT = (675.0, 1350.0, 2475.0)
M3_TOTAL = 10_000

M30_SLOPES = (
    -0.35, -0.34, -0.338, -0.334, -0.329, -0.293, -0.29, -0.289, -0.284, -0.281,
    -0.276, -0.244, -0.238, -0.222, -0.206, -0.167, -0.145, -0.142, -0.141, -0.135,
    -0.132, -0.102, -0.081, -0.071, -0.067, -0.066, -0.045, -0.019, -0.016, -0.002,
)
M30_INTERCEPTS_SIMILAR = (
    -1.304, -1.302, -1.302, -1.301, -1.3, -1.295, -1.294, -1.294, -1.294, -1.293,
    -1.293, -1.29, -1.289, -1.288, -1.287, -1.286, -1.286, -1.286, -1.286, -1.287,
    -1.287, -1.288, -1.289, -1.29, -1.291, -1.291, -1.293, -1.296, -1.297, -1.299,
)
M30_INTERCEPTS_DIFFERENT = (
    -3.058, -3.033, -2.976, -2.7, -2.463, -2.303, -2.235, -2.084, -2.08, -1.982,
    -1.925, -1.897, -1.815, -1.719, -1.333, -1.315, -1.152, -0.995, -0.948, -0.93,
    -0.929, -0.913, -0.811, -0.811, -0.81, -0.754, -0.738, -0.663, -0.65, -0.61,
)
M30_SIZES_DIFFERENT = (
    265.0, 271.0, 287.0, 377.0, 478.0, 557.0, 596.0, 693.0, 695.0, 766.0,
    810.0, 829.0, 899.0, 987.0, 1450.0, 1472.0, 1730.0, 2023.0, 2122.0, 2160.0,
    2161.0, 2194.0, 2433.0, 2433.0, 2436.0, 2575.0, 2619.0, 2830.0, 2865.0, 2988.0,
)
M30_TOTAL = 50_500


@dataclass(frozen=True)
class Scenario:
    """Full data-generating configuration for one simulation setting."""

    name: str
    m: int
    n: int
    slopes: tuple[float, ...]
    intercepts: tuple[float, ...]
    theta_target: tuple[float, float, float, float] = THETA_TARGET
    theta_variances: tuple[float, float, float, float] = (VAR_NU, 0.1, VAR_LAMBDA, 2.0)
    treat_prob: float = 0.5
    setting: Optional[int] = None

    def __post_init__(self):
        if self.m < 1 or self.n < self.m + 1:
            raise ValueError("need m >= 1 and n > m")
        if len(self.slopes) != self.m or len(self.intercepts) != self.m:
            raise ValueError("slopes and intercepts must have one entry per study")
        if not all(v > 0.0 for v in self.theta_variances):
            raise ValueError("coefficient variances must be positive")
        if not 0.0 < self.treat_prob < 1.0:
            raise ValueError("treat_prob must be in (0, 1)")


def _heterogeneity(setting: int) -> tuple[float, float]:
    return MEASURED_HETEROGENEITY if setting in (1, 2) else UNMEASURED_HETEROGENEITY


def _make_preset(name: str, m: int, setting: int) -> Scenario:
    if m == 3:
        intercepts = M3_INTERCEPTS_SIMILAR if setting == 1 else M3_INTERCEPTS_DIFFERENT
        slopes, n = M3_SLOPES, M3_TOTAL
    else:
        intercepts = M30_INTERCEPTS_SIMILAR if setting == 1 else M30_INTERCEPTS_DIFFERENT
        slopes, n = M30_SLOPES, M30_TOTAL
    vg, vk = _heterogeneity(setting)
    return Scenario(
        name=name, m=m, n=n, slopes=slopes, intercepts=intercepts,
        theta_variances=(VAR_NU, vg, VAR_LAMBDA, vk), setting=setting,
    )


PRESETS: dict[str, Scenario] = {
    f"m{m}s{k}": _make_preset(f"m{m}s{k}", m, k) for m in (3, 30) for k in (1, 2, 3)
}


def preset_scenario(name: str) -> Scenario:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def _gauss_hermite(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes/weights for expectations over a standard normal."""
    t, u = np.polynomial.hermite.hermgauss(nodes)
    return t * math.sqrt(2.0), u / math.sqrt(math.pi)


def _membership_probs(intercepts: np.ndarray, slopes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(len(x), m+1) membership probabilities, target in column 0."""
    eta = intercepts[None, :] + np.outer(x, slopes)
    mx = np.maximum(eta.max(axis=1), 0.0)
    denom = np.exp(-mx) + np.exp(eta - mx[:, None]).sum(axis=1)
    out = np.empty((x.size, slopes.size + 1))
    out[:, 0] = np.exp(-mx) / denom
    out[:, 1:] = np.exp(eta - mx[:, None]) / denom[:, None]
    return out


def expected_source_sizes(
    slopes: Sequence[float],
    intercepts: Sequence[float],
    n: int,
    nodes: int = 64,
) -> np.ndarray:
    """Expected unit counts (target, study 1..m) under the membership model,
    integrating over the standard-normal covariate by quadrature."""
    x, w = _gauss_hermite(nodes)
    probs = _membership_probs(np.asarray(intercepts, float), np.asarray(slopes, float), x)
    return n * (w @ probs)


def solve_membership_intercepts(
    slopes: Sequence[float],
    target_sizes: Sequence[float],
    n: int,
    nodes: int = 64,
    tol: float = 1e-8,
    max_iter: int = 500,
) -> np.ndarray:
    """Intercepts making each study's expected size match ``target_sizes``.

    Proportional-fitting update: each intercept moves by the log of the
    ratio of desired to current expected size until the largest log-ratio
    falls below ``tol``. Deterministic; quadrature leaves no Monte-Carlo
    noise in the solved constants.
    """
    slopes = np.asarray(slopes, dtype=float)
    sizes = np.asarray(target_sizes, dtype=float)
    if sizes.shape != slopes.shape:
        raise ValueError("one target size per study required")
    if np.any(sizes <= 0.0) or sizes.sum() >= n:
        raise ValueError("target sizes must be positive and sum to less than n")

    x, w = _gauss_hermite(nodes)
    share = sizes / n
    intercepts = np.log(share / (1.0 - share.sum()))
    for _ in range(max_iter):
        current = n * (w @ _membership_probs(intercepts, slopes, x)[:, 1:])
        ratio = np.log(sizes / current)
        intercepts = intercepts + ratio
        if np.abs(ratio).max() < tol:
            return intercepts
    raise InterceptSolveError(f"no convergence in {max_iter} iterations")


def conditional_ate(theta: Sequence[float], x: float) -> float:
    """Conditional average treatment effect gamma + kappa * x."""
    return float(theta[1] + theta[3] * x)


def generate_replicate(sc: Scenario, stream: Stream) -> tuple[Dataset, dict[int, np.ndarray]]:
    """One simulated dataset plus the drawn per-study outcome coefficients."""
    slopes = np.asarray(sc.slopes)
    intercepts = np.asarray(sc.intercepts)
    x = np.asarray(stream.normal(sc.n))
    probs = _membership_probs(intercepts, slopes, x)
    study = stream.categorical_rows(probs)
    in_study = study >= 1
    arm = np.where(in_study, np.asarray(stream.bernoulli(sc.treat_prob, sc.n)), -1)
    theta = stream.mvn_diagonal(sc.theta_target, sc.theta_variances, sc.m)  # (m, 4)
    eps = np.asarray(stream.normal(sc.n))

    outcome = np.full(sc.n, np.nan)
    rows = np.flatnonzero(in_study)
    th = theta[study[rows] - 1]  # (k, 4)
    a = arm[rows].astype(float)
    outcome[rows] = th[:, 0] + a * th[:, 1] + x[rows] * th[:, 2] + a * x[rows] * th[:, 3] + eps[rows]

    ds = Dataset.from_arrays(study, arm, outcome, x[:, None], sc.m)
    return ds, {s: theta[s - 1] for s in range(1, sc.m + 1)}


@dataclass(frozen=True)
class TrueTate:
    tate: float
    e_x_target: float
    mcse: float  # Monte-Carlo SE of the E(X | target) approximation


def approximate_true_tate(sc: Scenario, n_replicates: int = 5000, seed: int = 0) -> TrueTate:
    """Approximate E(X | target) with membership-only replications and map it
    through the target conditional effect."""
    if n_replicates < 100:
        raise ValueError("n_replicates must be >= 100")
    slopes = np.asarray(sc.slopes)
    intercepts = np.asarray(sc.intercepts)
    tree = SeedTree(seed)
    means = np.empty(n_replicates)
    for r in range(n_replicates):
        stream = tree.derive("replicate", r).stream()
        x = np.asarray(stream.normal(sc.n))
        probs = _membership_probs(intercepts, slopes, x)
        study = stream.categorical_rows(probs)
        sel = study == 0
        means[r] = x[sel].mean() if sel.any() else np.nan
    means = means[np.isfinite(means)]
    e_x = float(means.mean())
    mcse = float(means.std(ddof=1) / math.sqrt(means.size))
    gamma0, kappa0 = sc.theta_target[1], sc.theta_target[3]
    return TrueTate(gamma0 + kappa0 * e_x, e_x, mcse)


@dataclass(frozen=True)
class BootstrapPlan:
    B: int = 1000
    alpha: float = 0.05


@dataclass(frozen=True)
class EstimatorMetrics:
    """Performance summary for one estimator, each with a Monte-Carlo SE."""

    bias: float
    bias_mcse: float
    emp_se: float
    emp_se_mcse: float
    mse: float
    mse_mcse: float
    n_used: int
    coverage: Optional[float] = None
    coverage_mcse: Optional[float] = None
    rel_se_error: Optional[float] = None
    rel_se_error_mcse: Optional[float] = None


@dataclass(frozen=True)
class SimMetrics:
    scenario: str
    truth: float
    n_replications: int
    rows: dict[str, EstimatorMetrics]
    failures: dict[str, int] = field(default_factory=dict)


def compute_metrics(
    estimates: np.ndarray,
    intervals: Optional[np.ndarray] = None,
    bootstrap_ses: Optional[np.ndarray] = None,
    truth: float = 0.0,
) -> EstimatorMetrics:
    """Bias, empirical SE, and MSE against ``truth`` (optionally interval
    coverage and the percent error of the average bootstrap SE), each paired
    with its Monte-Carlo standard error."""
    est = np.asarray(estimates, dtype=float)
    est = est[np.isfinite(est)]
    k = est.size
    if k < 2:
        raise TooFewEstimatesError("need at least two finite estimates")

    errors = est - truth
    bias = float(errors.mean())
    emp_se = float(est.std(ddof=1))
    bias_mcse = emp_se / math.sqrt(k)
    emp_se_mcse = emp_se / math.sqrt(2.0 * (k - 1))
    sq = errors**2
    mse = float(sq.mean())
    mse_mcse = float(sq.std(ddof=1) / math.sqrt(k))

    coverage = coverage_mcse = None
    if intervals is not None:
        iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
        iv = iv[np.isfinite(iv).all(axis=1)]
        if iv.shape[0] > 0:
            hit = (iv[:, 0] <= truth) & (truth <= iv[:, 1])
            coverage = float(hit.mean())
            coverage_mcse = math.sqrt(coverage * (1.0 - coverage) / iv.shape[0])

    rel = rel_mcse = None
    if bootstrap_ses is not None:
        ses = np.asarray(bootstrap_ses, dtype=float)
        ses = ses[np.isfinite(ses)]
        if ses.size > 1 and emp_se > 0.0:
            avg = float(ses.mean())
            rel = 100.0 * (avg / emp_se - 1.0)
            # delta method, treating the SE average and EmpSE as independent
            rel_mcse = 100.0 * math.sqrt(
                ses.var(ddof=1) / (ses.size * emp_se**2)
                + avg**2 / (2.0 * (k - 1) * emp_se**2)
            )

    return EstimatorMetrics(
        bias=bias, bias_mcse=bias_mcse,
        emp_se=emp_se, emp_se_mcse=emp_se_mcse,
        mse=mse, mse_mcse=mse_mcse, n_used=k,
        coverage=coverage, coverage_mcse=coverage_mcse,
        rel_se_error=rel, rel_se_error_mcse=rel_mcse,
    )


def _sim_worker(payload, r: int) -> dict:
    sc, estimators, tspec, mspec, plan, master_seed = payload
    stream = SeedTree(master_seed).derive("replicate", r).stream()
    row: dict = {"fail": None}
    try:
        ds, _ = generate_replicate(sc, stream)
    except ValidationError as err:
        row["fail"] = f"generation: {err}"
        return row

    try:
        reports, _ = estimate_suite(ds, tuple(estimators), tspec, mspec)
        for name in estimators:
            row[name] = reports[name].delta_hat
    except (FitError, EstimationError) as err:
        row["fail"] = str(err)
        return row

    if plan is not None:
        config = EstimatorConfig(tuple(estimators), tspec, mspec)
        boot_seed = SeedTree(master_seed).child_seed("bootstrap", r)
        try:
            boot = bootstrap_estimate(ds, config, B=plan.B, alpha=plan.alpha,
                                      master_seed=boot_seed, threads=1)
        except EstimationError as err:
            row["fail"] = f"bootstrap: {err}"
            return row
        for name in estimators:
            row[f"{name}:se"] = boot[name].se_hat
            row[f"{name}:interval"] = boot[name].interval
    return row


def run_simulation_study(
    sc: Scenario,
    estimators: Sequence[str] = ESTIMATOR_NAMES,
    n_replications: int = 1000,
    bootstrap: Optional[BootstrapPlan] = None,
    master_seed: int = 0,
    truth: Optional[float] = None,
    truth_replicates: int = 5000,
    threads: int = 1,
    treatment_spec: Optional[ModelSpec] = None,
    membership_spec: Optional[ModelSpec] = None,
) -> SimMetrics:
    """Generate/estimate/(bootstrap) over replications and summarize.

    The true effect is approximated internally unless ``truth`` is given.
    Replicates derive their streams from (master_seed, index), so results do
    not depend on ``threads``.
    """
    if n_replications < 2:
        raise TooFewEstimatesError("need at least two replications")
    unknown = set(estimators) - set(ESTIMATOR_NAMES)
    if unknown:
        raise ValueError(f"unknown estimators: {sorted(unknown)}")
    tspec = treatment_spec or ModelSpec.parse("1 + x0")
    mspec = membership_spec or ModelSpec.parse("1 + x0")
    if truth is None:
        truth = approximate_true_tate(
            sc, truth_replicates, seed=SeedTree(master_seed).child_seed("truth")
        ).tate

    payload = (sc, tuple(estimators), tspec, mspec, bootstrap, master_seed)
    rows = indexed_map(_sim_worker, payload, n_replications, threads)

    metrics: dict[str, EstimatorMetrics] = {}
    failures: dict[str, int] = {}
    for name in estimators:
        est = np.array([row.get(name, np.nan) for row in rows], dtype=float)
        failures[name] = int(np.count_nonzero(~np.isfinite(est)))
        intervals = None
        ses = None
        if bootstrap is not None:
            intervals = np.array(
                [row.get(f"{name}:interval", (np.nan, np.nan)) for row in rows], dtype=float
            )
            ses = np.array([row.get(f"{name}:se", np.nan) for row in rows], dtype=float)
        metrics[name] = compute_metrics(est, intervals, ses, truth)

    return SimMetrics(
        scenario=sc.name,
        truth=truth,
        n_replications=n_replications,
        rows=metrics,
        failures=failures,
    )
