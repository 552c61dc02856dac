"""Per-unit weights and the three target-population ATE estimators.

All estimators are normalized (Hajek) contrasts: the treated-arm weighted
mean of outcomes minus the control-arm weighted mean, so per-arm rescaling
of weights leaves the estimate unchanged. Weight schemes:

* unadjusted   - indicator of the received arm, pooled across studies
* pooled       - inverse treatment propensity times inverse odds of being
                 in any study versus the target population
* study_specific(s) - inverse treatment propensity within study s times the
                 target-versus-study-s membership probability ratio

The two-stage estimator averages the m study-specific contrasts with
strictly positive study-level weights (even weights by default). Nuisance
models are fit once per dataset and shared across all per-study estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .data import CONTROL, Dataset, TREAT
from .design import ModelSpec, build_design
from .errors import (
    NonpositiveStudyWeightError,
    PropensityMismatchError,
    UnknownStudyError,
    ZeroArmWeightError,
)
from .propensity import (
    PROB_CLAMP,
    FittedPropensities,
    _fit_propensities_cached,
    fit_propensities,
    predict_membership,
    predict_treatment,
)

__all__ = [
    "WeightSet",
    "EstimateReport",
    "unadjusted_weights",
    "pooled_weights",
    "study_specific_weights",
    "hajek_contrast",
    "estimate_unadjusted",
    "estimate_pooled",
    "estimate_study_specific_tate",
    "estimate_two_stage",
    "positivity_summary",
]

ESTIMATOR_NAMES = ("unadjusted", "pooled", "two_stage")


@dataclass(frozen=True)
class WeightSet:
    """Per-unit (treat, control) weights. The weight for the arm a unit did
    not receive is zero; target units carry zero weights in both arms."""

    treat: np.ndarray
    control: np.ndarray
    scheme: str  # "unadjusted", "pooled" or "study_specific"
    study: Optional[int] = None  # set for study_specific
    n_clamped: int = 0  # units whose propensity hit the clamp bounds


@dataclass(frozen=True)
class EstimateReport:
    delta_hat: float
    mu_treat: float
    mu_control: float
    estimator: str
    per_study: Optional[dict[int, float]] = None
    study_weights: Optional[dict[int, float]] = None
    n_clamped: int = 0


@dataclass(frozen=True)
class _UnitPropensities:
    """Per-unit model evaluations shared by every weight scheme."""

    e_received: np.ndarray  # (n,) P(received arm | x, study), 0 for target
    membership: np.ndarray  # (n, m+1) membership probabilities
    e_clamped: np.ndarray  # (n,) bool, treatment propensity at a clamp bound


def _check_props(ds: Dataset, props: FittedPropensities) -> None:
    if props.membership.m != ds.m or set(props.treatment) != set(range(1, ds.m + 1)):
        raise PropensityMismatchError(
            f"propensities cover {props.membership.m} studies, dataset has {ds.m}"
        )
    if props.membership_spec.max_index() >= ds.p or props.treatment_spec.max_index() >= ds.p:
        raise PropensityMismatchError("propensity model spec references missing covariates")


def _unit_propensities(ds: Dataset, props: FittedPropensities) -> _UnitPropensities:
    _check_props(ds, props)
    e = np.zeros(ds.n)
    for s in range(1, ds.m + 1):
        idx = ds.study_indices(s)
        dm = build_design(ds.x[idx], props.treatment_spec)
        e_treat = np.atleast_1d(predict_treatment(props.treatment[s], dm))
        e[idx] = np.where(ds.arm[idx] == TREAT, e_treat, 1.0 - e_treat)
    in_study = ds.arm >= 0
    e_clamped = in_study & ((e <= PROB_CLAMP) | (e >= 1.0 - PROB_CLAMP))
    dm_all = build_design(ds.x, props.membership_spec)
    pmat = np.atleast_2d(predict_membership(props.membership, dm_all))
    return _UnitPropensities(e, pmat, e_clamped)


def unadjusted_weights(ds: Dataset) -> WeightSet:
    """Weight one for the received arm of every study unit, zero otherwise."""
    treat = (ds.arm == TREAT).astype(float)
    control = (ds.arm == CONTROL).astype(float)
    return WeightSet(treat, control, "unadjusted")


def pooled_weights(
    ds: Dataset,
    props: FittedPropensities,
    _units: Optional[_UnitPropensities] = None,
) -> WeightSet:
    """Inverse treatment propensity times inverse odds of study enrollment
    (any study versus target), applied to every study unit."""
    units = _unit_propensities(ds, props) if _units is None else _units
    in_study = ds.arm >= 0
    p0 = units.membership[:, 0]
    w = np.zeros(ds.n)
    w[in_study] = (1.0 / units.e_received[in_study]) * (p0[in_study] / (1.0 - p0[in_study]))
    clamped = int(np.count_nonzero(units.e_clamped | (in_study & (p0 <= PROB_CLAMP))))
    treat = np.where(ds.arm == TREAT, w, 0.0)
    control = np.where(ds.arm == CONTROL, w, 0.0)
    return WeightSet(treat, control, "pooled", n_clamped=clamped)


def study_specific_weights(
    ds: Dataset,
    s: int,
    props: FittedPropensities,
    _units: Optional[_UnitPropensities] = None,
) -> WeightSet:
    """Weights for the study-s contrast: inverse treatment propensity times
    the target-versus-study-s membership probability ratio; zero outside s."""
    if not 1 <= s <= ds.m:
        raise UnknownStudyError(f"study {s} outside 1..{ds.m}")
    units = _unit_propensities(ds, props) if _units is None else _units
    idx = ds.study_indices(s)
    p0 = units.membership[idx, 0]
    ps = units.membership[idx, s]
    w = np.zeros(ds.n)
    w[idx] = (1.0 / units.e_received[idx]) * (p0 / ps)
    clamped = int(np.count_nonzero(
        units.e_clamped[idx] | (p0 <= PROB_CLAMP) | (ps <= PROB_CLAMP)
    ))
    treat = np.where(ds.arm == TREAT, w, 0.0)
    control = np.where(ds.arm == CONTROL, w, 0.0)
    return WeightSet(treat, control, "study_specific", study=s, n_clamped=clamped)


def _study_contrast(ds: Dataset, s: int, units: _UnitPropensities) -> tuple[float, float, float, int]:
    """(delta, mu_treat, mu_control, n_clamped) for study s without
    materializing full-length weight vectors."""
    idx = ds.study_indices(s)
    p0 = units.membership[idx, 0]
    ps = units.membership[idx, s]
    w = (1.0 / units.e_received[idx]) * (p0 / ps)
    clamped = int(np.count_nonzero(
        units.e_clamped[idx] | (p0 <= PROB_CLAMP) | (ps <= PROB_CLAMP)
    ))
    treated = ds.arm[idx] == TREAT
    y = ds.outcome[idx]
    total_t = w[treated].sum()
    total_c = w[~treated].sum()
    if total_t <= 0.0 or total_c <= 0.0:
        arm = "treated" if total_t <= 0.0 else "control"
        raise ZeroArmWeightError(f"{arm} arm has zero total weight (study_specific)")
    mu_t = float(w[treated] @ y[treated]) / total_t
    mu_c = float(w[~treated] @ y[~treated]) / total_c
    return mu_t - mu_c, mu_t, mu_c, clamped


def hajek_contrast(ds: Dataset, w: WeightSet) -> EstimateReport:
    """Difference of weighted outcome means between arms, each normalized by
    its arm's total weight."""
    rows = ds.arm >= 0
    y = ds.outcome[rows]
    wt = w.treat[rows]
    wc = w.control[rows]
    total_t = wt.sum()
    total_c = wc.sum()
    if total_t <= 0.0 or total_c <= 0.0:
        arm = "treated" if total_t <= 0.0 else "control"
        raise ZeroArmWeightError(f"{arm} arm has zero total weight ({w.scheme})")
    mu_t = float(wt @ y) / total_t
    mu_c = float(wc @ y) / total_c
    name = w.scheme if w.study is None else f"{w.scheme}({w.study})"
    return EstimateReport(mu_t - mu_c, mu_t, mu_c, name, n_clamped=w.n_clamped)


def estimate_unadjusted(ds: Dataset) -> EstimateReport:
    report = hajek_contrast(ds, unadjusted_weights(ds))
    return EstimateReport(report.delta_hat, report.mu_treat, report.mu_control, "unadjusted")


def estimate_pooled(
    ds: Dataset,
    treatment_spec: ModelSpec,
    membership_spec: ModelSpec,
    props: Optional[FittedPropensities] = None,
) -> EstimateReport:
    """Pooled weighted estimate; refits nuisance models unless given."""
    if props is None:
        props = fit_propensities(ds, treatment_spec, membership_spec)
    report = hajek_contrast(ds, pooled_weights(ds, props))
    return EstimateReport(
        report.delta_hat, report.mu_treat, report.mu_control, "pooled",
        n_clamped=report.n_clamped,
    )


def estimate_study_specific_tate(ds: Dataset, s: int, props: FittedPropensities) -> float:
    """Hajek contrast restricted to study s under the study-s weights."""
    if not 1 <= s <= ds.m:
        raise UnknownStudyError(f"study {s} outside 1..{ds.m}")
    units = _unit_propensities(ds, props)
    return _study_contrast(ds, s, units)[0]


def estimate_two_stage(
    ds: Dataset,
    treatment_spec: ModelSpec,
    membership_spec: ModelSpec,
    study_weights: Optional[Mapping[int, float]] = None,
    props: Optional[FittedPropensities] = None,
    _units: Optional[_UnitPropensities] = None,
) -> EstimateReport:
    """Weighted average of the m study-specific target-population contrasts.

    Study-level weights default to even (1 per study) and must be strictly
    positive. Nuisance models are fit once and shared across studies.
    """
    if props is None:
        props = fit_propensities(ds, treatment_spec, membership_spec)
    _check_props(ds, props)
    if study_weights is None:
        study_weights = {s: 1.0 for s in range(1, ds.m + 1)}
    if set(study_weights) != set(range(1, ds.m + 1)):
        raise NonpositiveStudyWeightError("study weights must cover studies 1..m")
    for s, ws in study_weights.items():
        if not ws > 0.0:
            raise NonpositiveStudyWeightError(f"study {s} weight {ws} is not positive")

    units = _unit_propensities(ds, props) if _units is None else _units
    per_study: dict[int, float] = {}
    mu_t_acc = 0.0
    mu_c_acc = 0.0
    clamped = 0
    total = float(sum(study_weights.values()))
    for s in range(1, ds.m + 1):
        try:
            delta_s, mu_t_s, mu_c_s, n_cl = _study_contrast(ds, s, units)
        except ZeroArmWeightError as err:
            raise ZeroArmWeightError(f"study {s}: {err}") from err
        per_study[s] = delta_s
        mu_t_acc += study_weights[s] * mu_t_s
        mu_c_acc += study_weights[s] * mu_c_s
        clamped += n_cl
    mu_t = mu_t_acc / total
    mu_c = mu_c_acc / total
    delta = sum(study_weights[s] * per_study[s] for s in per_study) / total
    return EstimateReport(
        delta, mu_t, mu_c, "two_stage",
        per_study=per_study, study_weights=dict(study_weights), n_clamped=clamped,
    )


def estimate_suite(
    ds: Dataset,
    estimators: tuple[str, ...],
    treatment_spec: Optional[ModelSpec] = None,
    membership_spec: Optional[ModelSpec] = None,
    study_weights: Optional[Mapping[int, float]] = None,
    treatment_start: Optional[Mapping[int, np.ndarray]] = None,
    membership_start: Optional[np.ndarray] = None,
) -> tuple[dict[str, EstimateReport], Optional[FittedPropensities]]:
    """Evaluate several estimators with one shared nuisance fit.

    Returns the reports plus the fitted propensities (None when no weighted
    estimator was requested). This is the hot path used by the bootstrap and
    the simulation runner; results match the standalone estimate functions.
    """
    unknown = set(estimators) - set(ESTIMATOR_NAMES)
    if unknown:
        raise ValueError(f"unknown estimators: {sorted(unknown)}")
    reports: dict[str, EstimateReport] = {}
    props = units = None
    if {"pooled", "two_stage"} & set(estimators):
        props, e_received, pmat = _fit_propensities_cached(
            ds, treatment_spec, membership_spec, treatment_start, membership_start
        )
        in_study = ds.arm >= 0
        e_clamped = in_study & ((e_received <= PROB_CLAMP) | (e_received >= 1.0 - PROB_CLAMP))
        units = _UnitPropensities(e_received, pmat, e_clamped)
    for name in estimators:
        if name == "unadjusted":
            reports[name] = estimate_unadjusted(ds)
        elif name == "pooled":
            rep = hajek_contrast(ds, pooled_weights(ds, props, _units=units))
            reports[name] = EstimateReport(
                rep.delta_hat, rep.mu_treat, rep.mu_control, "pooled", n_clamped=rep.n_clamped
            )
        else:
            reports[name] = estimate_two_stage(
                ds, treatment_spec, membership_spec,
                study_weights=study_weights, props=props, _units=units,
            )
    return reports, props


def positivity_summary(ds: Dataset, props: FittedPropensities) -> dict[int, dict[str, float]]:
    """Per study: min/mean/max/sd of the predicted probability that each
    target-population unit participates in that study."""
    units = _unit_propensities(ds, props)
    target = ds.study_indices(0)
    out: dict[int, dict[str, float]] = {}
    for s in range(1, ds.m + 1):
        p = units.membership[target, s]
        out[s] = {
            "min": float(p.min()),
            "mean": float(p.mean()),
            "max": float(p.max()),
            "sd": float(p.std(ddof=1)) if p.size > 1 else 0.0,
        }
    return out
