"""Stratified two-level bootstrap with percentile intervals.

Resampling mirrors the imagined data-generating process: the target sample
is resampled with replacement on its own; the study axis is resampled by
drawing m study labels with replacement; and each drawn study is rebuilt by
resampling its treated and control arms separately, preserving that study's
own arm sizes. Rebuilt studies are relabeled 1..m so duplicated draws stay
distinct strata when the membership model is refit.

Each replicate's random stream is derived solely from
(master_seed, replicate_index), so replicates are order-free and
parallelizable with identical results for any worker count. A replicate
whose nuisance-model fit fails, or whose estimate is non-finite, is
recorded as missing; the standard error and percentile interval use the
successful replicates, and three sensitivity intervals show what happens if
every missing replicate had been extreme-low, at the mean, or extreme-high.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._parallel import indexed_map
from .data import CONTROL, Dataset, TREAT
from .design import ModelSpec
from .errors import (
    AllReplicatesFailedError,
    FitError,
    TooFewEstimatesError,
)
from .estimators import ESTIMATOR_NAMES, estimate_suite, estimate_unadjusted
from .propensity import FittedPropensities, fit_propensities
from .rng import SeedTree, Stream

__all__ = [
    "EstimatorConfig",
    "BootstrapResult",
    "stratified_resample",
    "bootstrap_estimate",
    "percentile_interval",
    "sensitivity_intervals",
]


@dataclass(frozen=True)
class EstimatorConfig:
    """Which estimators to run in each replicate, and their model specs."""

    estimators: tuple[str, ...]
    treatment_spec: Optional[ModelSpec] = None
    membership_spec: Optional[ModelSpec] = None
    study_weights: Optional[dict[int, float]] = None  # two_stage only

    def __post_init__(self):
        unknown = set(self.estimators) - set(ESTIMATOR_NAMES)
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")
        needs_models = {"pooled", "two_stage"} & set(self.estimators)
        if needs_models and (self.treatment_spec is None or self.membership_spec is None):
            raise ValueError(f"{sorted(needs_models)} require model specs")


@dataclass(frozen=True)
class BootstrapResult:
    """Replicate estimates (NaN marks a failed replicate) plus summaries."""

    estimates: np.ndarray
    B: int
    alpha: float
    se_hat: float
    interval: tuple[float, float]
    missing_count: int
    missing_rate: float
    sensitivity: dict[str, tuple[float, float]] = field(default_factory=dict)


def _resample_indices(ds: Dataset, stream: Stream) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(row indices into ds, new study labels, drawn study ids b_1..b_m).

    Draw order is fixed: target stratum, then the study axis, then each
    rebuilt study's treated arm followed by its control arm.
    """
    target = ds.study_indices(0)
    take = [target[stream.integers(0, target.size, target.size)]]
    labels = [np.zeros(target.size, dtype=np.int64)]
    drawn = np.asarray(stream.integers(1, ds.m + 1, ds.m))
    for j, b in enumerate(drawn, start=1):
        src = ds.study_indices(int(b))
        treated = src[ds.arm[src] == TREAT]
        control = src[ds.arm[src] == CONTROL]
        take.append(treated[stream.integers(0, treated.size, treated.size)])
        take.append(control[stream.integers(0, control.size, control.size)])
        labels.append(np.full(treated.size + control.size, j, dtype=np.int64))
    return np.concatenate(take), np.concatenate(labels), drawn


def stratified_resample(ds: Dataset, stream: Stream) -> Dataset:
    """One stratified bootstrap resample of ``ds`` (target stratum, study
    axis, then within-arm resampling with the drawn study's arm sizes)."""
    idx, labels, _ = _resample_indices(ds, stream)
    return Dataset.from_arrays(labels, ds.arm[idx], ds.outcome[idx], ds.x[idx], ds.m)


def _replicate_estimates(
    ds: Dataset,
    config: EstimatorConfig,
    stream: Stream,
    base: Optional[FittedPropensities],
) -> dict[str, float]:
    """Estimates for one resample; NaN for anything that failed."""
    idx, labels, drawn = _resample_indices(ds, stream)
    bds = Dataset.from_arrays(labels, ds.arm[idx], ds.outcome[idx], ds.x[idx], ds.m)

    out: dict[str, float] = {}
    if "unadjusted" in config.estimators:
        out["unadjusted"] = estimate_unadjusted(bds).delta_hat

    weighted = tuple(e for e in config.estimators if e in ("pooled", "two_stage"))
    if weighted:
        starts = None
        memb_start = None
        if base is not None:
            # warm starts from the original fit: study j resamples study b_j
            starts = {j: base.treatment[int(b)].coefficients for j, b in enumerate(drawn, 1)}
            memb_start = base.membership.coefficients[drawn - 1]
        try:
            reports, _ = estimate_suite(
                bds, weighted, config.treatment_spec, config.membership_spec,
                study_weights=config.study_weights,
                treatment_start=starts, membership_start=memb_start,
            )
        except FitError:
            reports = {}
        for name in weighted:
            est = reports[name].delta_hat if name in reports else np.nan
            out[name] = est if np.isfinite(est) else np.nan
    return out


def _bootstrap_worker(payload, r: int) -> dict[str, float]:
    ds, config, master_seed, base = payload
    stream = SeedTree(master_seed).derive("replicate", r).stream()
    return _replicate_estimates(ds, config, stream, base)


def bootstrap_estimate(
    ds: Dataset,
    config: EstimatorConfig,
    B: int = 1000,
    alpha: float = 0.05,
    master_seed: int = 0,
    threads: int = 1,
) -> dict[str, BootstrapResult]:
    """Run B stratified-bootstrap replicates and summarize each estimator.

    Returns one BootstrapResult per configured estimator. Nuisance refits in
    each replicate are warm-started from the models fitted to ``ds`` (a pure
    speedup: the converged solution is pinned by the fit tolerances).
    """
    if B < 2:
        raise ValueError("B must be >= 2")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")

    base: Optional[FittedPropensities] = None
    if {"pooled", "two_stage"} & set(config.estimators):
        base = fit_propensities(ds, config.treatment_spec, config.membership_spec)

    payload = (ds, config, master_seed, base)
    rows = indexed_map(_bootstrap_worker, payload, B, threads)

    results: dict[str, BootstrapResult] = {}
    for name in config.estimators:
        est = np.array([row[name] for row in rows])
        good = est[np.isfinite(est)]
        if good.size == 0:
            raise AllReplicatesFailedError(f"all {B} replicates failed for {name}")
        missing = B - good.size
        interval = percentile_interval(good, alpha)
        se = float(good.std(ddof=1)) if good.size > 1 else 0.0
        est.flags.writeable = False
        results[name] = BootstrapResult(
            estimates=est,
            B=B,
            alpha=alpha,
            se_hat=se,
            interval=interval,
            missing_count=missing,
            missing_rate=missing / B,
            sensitivity=sensitivity_intervals(good, missing, alpha),
        )
    return results


def percentile_interval(estimates: np.ndarray, alpha: float) -> tuple[float, float]:
    """(alpha/2, 1 - alpha/2) empirical quantiles with linear interpolation
    at position h = (k - 1) q + 1 over the sorted sample."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    vals = np.asarray(estimates, dtype=float)
    vals = vals[np.isfinite(vals)]
    if vals.size < 2:
        raise TooFewEstimatesError("need at least two finite estimates")
    lo, hi = np.quantile(vals, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


def sensitivity_intervals(
    estimates: np.ndarray, missing_count: int, alpha: float
) -> dict[str, tuple[float, float]]:
    """Percentile intervals recomputed with every missing replicate placed
    below all estimates, at their mean, or above all estimates."""
    if missing_count < 0:
        raise ValueError("missing_count must be >= 0")
    vals = np.asarray(estimates, dtype=float)
    vals = vals[np.isfinite(vals)]
    if missing_count == 0:
        base = percentile_interval(vals, alpha)
        return {"low": base, "mean": base, "high": base}
    placements = {
        "low": vals.min() - 1.0,
        "mean": float(vals.mean()),
        "high": vals.max() + 1.0,
    }
    return {
        key: percentile_interval(np.concatenate([vals, np.full(missing_count, v)]), alpha)
        for key, v in placements.items()
    }
