"""Nuisance-model fitting: per-study binomial logistic treatment models and
one multinomial logistic study-membership model with the target population
as the reference category.

Both families are fit by Newton-Raphson with step-halving from a zero start
(an explicit warm start may be supplied), judged converged when the maximum
absolute coefficient change drops below 1e-8 and the score max-norm is below
1e-6. The multinomial Hessian is solved by Cholesky factorization with a
1e-10 ridge retry that is reported on the fitted object, never silent.

Predicted probabilities are clamped to [1e-12, 1 - 1e-12]; downstream weight
builders treat a clamped unit as a practical-positivity warning.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
import scipy.linalg
from scipy.special import expit

from .data import Dataset, TREAT
from .design import DesignMatrix, ModelSpec, build_design
from .errors import (
    NonconvergenceError,
    PropensityMismatchError,
    SingularHessianError,
    UnknownStudyError,
)

__all__ = [
    "PROB_CLAMP",
    "FittedLogit",
    "FittedMultinomial",
    "FittedPropensities",
    "fit_binomial_logit",
    "fit_multinomial_logit",
    "fit_propensities",
    "predict_treatment",
    "predict_membership",
    "odds_target_vs_study",
]

PROB_CLAMP = 1e-12

COEF_TOL = 1e-8
SCORE_TOL = 1e-6
MAX_ITER = 100
MAX_HALVINGS = 30


def clamp_probability(p: np.ndarray) -> np.ndarray:
    """Keep probabilities inside the open unit interval before inversion."""
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


@dataclass(frozen=True)
class FittedLogit:
    coefficients: np.ndarray  # (q,)
    converged: bool
    iterations: int
    final_step: float


@dataclass(frozen=True)
class FittedMultinomial:
    coefficients: np.ndarray  # (m, q); row s-1 contrasts study s vs target
    converged: bool
    iterations: int
    final_step: float
    ridge_used: bool = False

    @property
    def m(self) -> int:
        return self.coefficients.shape[0]


def _solve_spd(info: np.ndarray, rhs: np.ndarray, allow_ridge: bool) -> tuple[np.ndarray, bool]:
    try:
        c = scipy.linalg.cho_factor(info, lower=True, check_finite=False)
        return scipy.linalg.cho_solve(c, rhs, check_finite=False), False
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
        pass
    if allow_ridge:
        ridged = info + 1e-10 * np.eye(info.shape[0])
        try:
            c = scipy.linalg.cho_factor(ridged, lower=True, check_finite=False)
            return scipy.linalg.cho_solve(c, rhs, check_finite=False), True
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
            pass
    raise SingularHessianError("Hessian factorization failed")


def _fit_binomial(
    x: np.ndarray, y: np.ndarray, start: Optional[np.ndarray]
) -> tuple[FittedLogit, np.ndarray]:
    """Core Newton loop; returns the fit and the fitted probabilities."""
    n, q = x.shape
    if y.shape != (n,):
        raise PropensityMismatchError("labels length must match design rows")
    if np.all(y == y[0]):
        raise NonconvergenceError("all labels identical: the MLE does not exist")

    beta = np.zeros(q) if start is None else np.asarray(start, dtype=float).copy()
    eta = x @ beta
    ll = float(y @ eta - np.logaddexp(0.0, eta).sum())
    p = expit(eta)
    change = np.inf

    for it in range(1, MAX_ITER + 1):
        score = x.T @ (y - p)
        if change < COEF_TOL and np.abs(score).max() < SCORE_TOL:
            return FittedLogit(beta, True, it - 1, float(change)), p
        w = p * (1.0 - p)
        info = (x * w[:, None]).T @ x
        direction, _ = _solve_spd(info, score, allow_ridge=False)

        step = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = beta + step * direction
            eta_c = x @ cand
            ll_c = float(y @ eta_c - np.logaddexp(0.0, eta_c).sum())
            if np.isfinite(ll_c) and ll_c >= ll - 1e-10 * (1.0 + abs(ll)):
                break
            step *= 0.5
        else:
            raise NonconvergenceError("log-likelihood could not be increased")
        change = step * float(np.abs(direction).max())
        beta, eta, ll = cand, eta_c, ll_c
        p = expit(eta)

    raise NonconvergenceError(f"no convergence in {MAX_ITER} iterations")


def fit_binomial_logit(
    design: DesignMatrix | np.ndarray,
    labels: np.ndarray,
    start: Optional[np.ndarray] = None,
) -> FittedLogit:
    """Maximum-likelihood logistic regression of binary ``labels`` on ``design``.

    Raises NonconvergenceError when the iteration cap is hit or the
    log-likelihood cannot be increased (separation, degenerate labels) and
    SingularHessianError when the information matrix cannot be factorized.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(labels, dtype=float)
    return _fit_binomial(x, y, start)[0]


class _SoftmaxState:
    """Softmax pieces at one coefficient value, with the probability
    matrices materialized lazily (step-halving only needs the likelihood).

    The per-row max shift is applied only when a predictor is large enough
    to overflow; in the common bounded case a single global check avoids
    two full passes over the matrix.
    """

    __slots__ = ("exps", "inv_denom", "t", "lse")

    def __init__(self, eta: np.ndarray):
        if float(eta.max(initial=0.0)) < 500.0:
            self.exps = np.exp(eta)
            self.t = None  # unshifted
            denom = 1.0 + self.exps.sum(axis=1)
            self.lse = np.log(denom)
        else:
            mx = np.maximum(eta.max(axis=1), 0.0)
            self.exps = np.exp(eta - mx[:, None])
            self.t = np.exp(-mx)
            denom = self.t + self.exps.sum(axis=1)
            self.lse = mx + np.log(denom)
        self.inv_denom = 1.0 / denom

    def log_denominators(self) -> np.ndarray:
        return self.lse

    def probabilities(self) -> tuple[np.ndarray, np.ndarray]:
        """(study probabilities (n, m), target probability (n,))."""
        probs = self.exps * self.inv_denom[:, None]
        p_target = self.inv_denom if self.t is None else self.t * self.inv_denom
        return probs, p_target


def _softmax_target_baseline(eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stable softmax over {target, studies} from study linear predictors."""
    return _SoftmaxState(eta).probabilities()


def _fit_multinomial(
    x: np.ndarray, cats: np.ndarray, m: Optional[int], start: Optional[np.ndarray]
) -> tuple[FittedMultinomial, np.ndarray]:
    """Core Newton loop; returns the fit plus the raw fitted (n, m+1)
    membership matrix at convergence (target probability in column 0)."""
    n, q = x.shape
    if cats.shape != (n,):
        raise PropensityMismatchError("categories length must match design rows")
    m = int(cats.max()) if m is None else m
    if m < 1:
        raise ValueError("need at least one non-baseline category")
    present = np.bincount(cats, minlength=m + 1)
    if (present == 0).any() or cats.min() < 0 or cats.max() > m:
        raise ValueError("all categories 0..m must be present in the data")

    study_rows = cats >= 1
    # constant part of the score: per-category column sums of the design
    score_const = np.empty((m, q))
    for a in range(q):
        score_const[:, a] = np.bincount(
            cats[study_rows] - 1, weights=x[study_rows, a], minlength=m
        )

    cat_rows = np.flatnonzero(study_rows)
    cat_cols = cats[study_rows] - 1

    def evaluate(coefficients: np.ndarray) -> tuple[float, _SoftmaxState]:
        eta = x @ coefficients.T  # (n, m)
        state = _SoftmaxState(eta)
        return float(eta[cat_rows, cat_cols].sum() - state.lse.sum()), state

    coef = np.zeros((m, q)) if start is None else np.asarray(start, dtype=float).copy()
    ll, state = evaluate(coef)
    probs, p_target = state.probabilities()
    change = np.inf
    ridge_used = False
    diag = np.arange(m)
    pair_cols = [
        [x[:, a] * x[:, b] for b in range(a, q)] for a in range(q)
    ]  # design column products, fixed across iterations

    for it in range(1, MAX_ITER + 1):
        score = score_const - probs.T @ x  # (m, q)
        if change < COEF_TOL and np.abs(score).max() < SCORE_TOL:
            full = np.column_stack([p_target, probs])
            return FittedMultinomial(coef, True, it - 1, float(change), ridge_used), full

        # Information blocks ((s,a),(k,b)): sum_i x_ia x_ib p_is (1(s=k) - p_ik).
        # With R_a = probs * x_a, the cross part is R_a^T R_b.
        scaled = [probs if a == 0 else probs * x[:, a : a + 1] for a in range(q)]
        info4 = np.empty((m, q, m, q))
        for a in range(q):
            for off, b in enumerate(range(a, q)):
                block = -(scaled[a].T @ scaled[b])
                block[diag, diag] += pair_cols[a][off] @ probs
                info4[:, a, :, b] = block
                if a != b:
                    info4[:, b, :, a] = block.T
        info = info4.reshape(m * q, m * q)
        direction, used = _solve_spd(info, score.ravel(), allow_ridge=True)
        ridge_used = ridge_used or used
        direction = direction.reshape(m, q)

        step = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = coef + step * direction
            ll_c, state_c = evaluate(cand)
            if np.isfinite(ll_c) and ll_c >= ll - 1e-10 * (1.0 + abs(ll)):
                break
            step *= 0.5
        else:
            raise NonconvergenceError("log-likelihood could not be increased")
        change = step * float(np.abs(direction).max())
        coef, ll = cand, ll_c
        probs, p_target = state_c.probabilities()

    raise NonconvergenceError(f"no convergence in {MAX_ITER} iterations")


def fit_multinomial_logit(
    design: DesignMatrix | np.ndarray,
    categories: np.ndarray,
    m: Optional[int] = None,
    start: Optional[np.ndarray] = None,
) -> FittedMultinomial:
    """Maximum-likelihood multinomial logistic regression with category 0
    (the target population) as baseline.

    ``categories`` holds integers in {0..m}; every category must be present.
    """
    x = np.asarray(design, dtype=float)
    cats = np.asarray(categories, dtype=np.int64)
    return _fit_multinomial(x, cats, m, start)[0]


def normalize_membership(raw: np.ndarray) -> np.ndarray:
    """Clamp a raw (n, m+1) softmax matrix away from zero and renormalize so
    every entry is strictly positive and each row sums to one."""
    out = np.clip(raw, PROB_CLAMP, None)
    out /= out.sum(axis=1, keepdims=True)
    return out


def predict_treatment(fit: FittedLogit, v: np.ndarray) -> float | np.ndarray:
    """P(A = treat | v), clamped inside the open unit interval."""
    v = np.asarray(v, dtype=float)
    eta = v @ fit.coefficients
    out = clamp_probability(expit(eta))
    return float(out) if np.ndim(out) == 0 else out


def predict_membership(fit: FittedMultinomial, v: np.ndarray) -> np.ndarray:
    """Probability vector over {0..m}; entry 0 is the target population.

    Entries are strictly positive and sum to one; a vanishing softmax entry
    is lifted to the clamp floor and the vector renormalized.
    """
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    vv = v[None, :] if single else v
    eta = vv @ fit.coefficients.T  # (n, m)
    probs, p_target = _softmax_target_baseline(eta)
    out = normalize_membership(np.column_stack([p_target, probs]))
    return out[0] if single else out


def odds_target_vs_study(fit: FittedMultinomial, v: np.ndarray, s: int) -> float | np.ndarray:
    """p(v, 0) / p(v, s) computed exactly as exp(-v . beta_s)."""
    if not 1 <= s <= fit.m:
        raise UnknownStudyError(f"study {s} outside 1..{fit.m}")
    v = np.asarray(v, dtype=float)
    out = np.exp(-(v @ fit.coefficients[s - 1]))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class FittedPropensities:
    """All nuisance models for one dataset: m treatment logits plus one
    membership model, with the specs they were built from."""

    treatment: Mapping[int, FittedLogit]
    membership: FittedMultinomial
    treatment_spec: ModelSpec
    membership_spec: ModelSpec

    def __post_init__(self):
        if len(self.treatment) != self.membership.m:
            raise PropensityMismatchError("need exactly one treatment model per study")


def _fit_propensities_cached(
    ds: Dataset,
    treatment_spec: ModelSpec,
    membership_spec: ModelSpec,
    treatment_start: Optional[Mapping[int, np.ndarray]] = None,
    membership_start: Optional[np.ndarray] = None,
) -> tuple[FittedPropensities, np.ndarray, np.ndarray]:
    """Fit all nuisance models and also return the per-unit fitted values:
    the clamped probability of each study unit's received arm and the
    normalized (n, m+1) membership matrix. These equal what predicting on
    the training rows would give, without the second pass."""
    treatment: dict[int, FittedLogit] = {}
    e_received = np.zeros(ds.n)
    for s in range(1, ds.m + 1):
        idx = ds.study_indices(s)
        dm = build_design(ds.x[idx], treatment_spec)
        start = None if treatment_start is None else treatment_start.get(s)
        fit, p = _fit_binomial(np.asarray(dm), (ds.arm[idx] == TREAT).astype(float), start)
        treatment[s] = fit
        p = clamp_probability(p)
        e_received[idx] = np.where(ds.arm[idx] == TREAT, p, 1.0 - p)
    dm_all = build_design(ds.x, membership_spec)
    membership, raw = _fit_multinomial(np.asarray(dm_all), ds.study, ds.m, membership_start)
    props = FittedPropensities(treatment, membership, treatment_spec, membership_spec)
    return props, e_received, normalize_membership(raw)


def fit_propensities(
    ds: Dataset,
    treatment_spec: ModelSpec,
    membership_spec: ModelSpec,
    treatment_start: Optional[Mapping[int, np.ndarray]] = None,
    membership_start: Optional[np.ndarray] = None,
) -> FittedPropensities:
    """Fit every nuisance model once for ``ds``; fits are deterministic and
    shared by all estimators downstream."""
    return _fit_propensities_cached(
        ds, treatment_spec, membership_spec, treatment_start, membership_start
    )[0]
