"""Exact verification of the identification result on finite discrete
populations.

A population is a joint distribution over a finite covariate support and
data sources (target population 0 and studies 1..m), together with
treatment-assignment probabilities, per-source conditional average
treatment effects, and arm means consistent with those effects. Because
every quantity in scope is a first moment, this representation is lossless
for the identity being checked.

Two routes to the target average effect must agree when the mixing
condition holds: the direct route averages the target conditional effect
over the target covariate distribution; the weighted route evaluates, study
by study and exactly by summation over atoms, the normalized weighted
outcome contrast with weights

    w(a, s) = I(A=a)/P(A=a|x,s) * P(S=0|x)/P(S=s|x)

and then mixes the per-study values with the study-membership shares
P(S=s | S in 1..m).

The mixing condition requires the per-study conditional effects at each
covariate value to average, under those same marginal membership shares, to
the target conditional effect. (Averaging under the shares conditional on
x instead does not make the two routes agree: the interchange of the
covariate and study expectations in the weighted route needs mixture
weights that are constant in x.)
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .data import Dataset
from .errors import AssumptionViolationError, UnknownStudyError
from .rng import Stream

__all__ = [
    "DiscretePopulation",
    "check_assumption_b4",
    "true_tate_direct",
    "tate_via_identification",
    "expected_weight",
    "random_population",
    "violate_b4",
    "sample_dataset",
    "run_oracle_suite",
]

TREAT_ARM = "treat"
CONTROL_ARM = "control"


@dataclass(frozen=True)
class DiscretePopulation:
    """Finite joint distribution of covariate value and data source.

    mass[k, s] is P(X = x_k, S = s) with s = 0 the target population;
    treat_prob[k, s-1] is P(A = treat | x_k, study s); cate[k, s] is the
    conditional treatment effect at x_k in source s (column 0 = target);
    mean_treat/mean_control[k, s-1] are arm means in study s at x_k and
    must differ by exactly the study's conditional effect.
    """

    x_values: np.ndarray  # (K,)
    mass: np.ndarray  # (K, m+1)
    treat_prob: np.ndarray  # (K, m)
    cate: np.ndarray  # (K, m+1)
    mean_treat: np.ndarray  # (K, m)
    mean_control: np.ndarray  # (K, m)

    def __post_init__(self):
        k, cols = self.mass.shape
        m = cols - 1
        if self.x_values.shape != (k,) or self.cate.shape != (k, m + 1):
            raise ValueError("inconsistent population shapes")
        if self.treat_prob.shape != (k, m) or self.mean_treat.shape != (k, m):
            raise ValueError("inconsistent population shapes")
        if abs(self.mass.sum() - 1.0) > 1e-9 or (self.mass < 0).any():
            raise ValueError("masses must be nonnegative and sum to one")
        if not np.allclose(self.mean_treat - self.mean_control, self.cate[:, 1:], atol=1e-12):
            raise ValueError("arm means must differ by the conditional effect")

    @property
    def m(self) -> int:
        return self.mass.shape[1] - 1

    def check_support(self) -> None:
        """Positivity requirements: treatment positivity within each study
        and target-to-study covariate overlap."""
        on_support = self.mass[:, 1:] > 0.0
        if np.any(on_support & ((self.treat_prob <= 0.0) | (self.treat_prob >= 1.0))):
            raise AssumptionViolationError("treatment probabilities must be in (0,1) on support")
        target_rows = self.mass[:, 0] > 0.0
        if np.any(target_rows[:, None] & (self.mass[:, 1:] <= 0.0)):
            raise AssumptionViolationError(
                "every covariate value in the target needs positive mass in every study"
            )

    def study_shares(self) -> np.ndarray:
        """P(S = s | S in 1..m) for s = 1..m."""
        totals = self.mass[:, 1:].sum(axis=0)
        return totals / totals.sum()


def check_assumption_b4(pop: DiscretePopulation, tol: float = 1e-9) -> bool:
    """Do the per-study conditional effects at each target-supported x
    average (under the marginal study-membership shares) to the target
    conditional effect?"""
    shares = pop.study_shares()
    rows = pop.mass[:, 0] > 0.0
    mixed = pop.cate[rows, 1:] @ shares
    return bool(np.all(np.abs(mixed - pop.cate[rows, 0]) <= tol))


def true_tate_direct(pop: DiscretePopulation) -> float:
    """Average of the target conditional effect over the target covariate
    distribution: the estimand, straight from its definition."""
    p0 = pop.mass[:, 0]
    return float((pop.cate[:, 0] @ p0) / p0.sum())


def expected_weight(pop: DiscretePopulation, s: int, arm: str = TREAT_ARM) -> float:
    """E[w(a, s) | S = s], evaluated exactly by summation over atoms."""
    if not 1 <= s <= pop.m:
        raise UnknownStudyError(f"study {s} outside 1..{pop.m}")
    p_s = pop.mass[:, s]
    prob_s = p_s.sum()
    px_cond = p_s / prob_s  # P(x | S=s)
    ratio = pop.mass[:, 0] / p_s  # P(S=0|x) / P(S=s|x)
    e_treat = pop.treat_prob[:, s - 1]
    total = 0.0
    for a_prob, indicator in ((e_treat, arm == TREAT_ARM), (1.0 - e_treat, arm == CONTROL_ARM)):
        if indicator:
            total += float(px_cond @ (a_prob * (1.0 / a_prob) * ratio))
    return total


def _study_tate_weighted(pop: DiscretePopulation, s: int) -> float:
    """The study-s weighted contrast, exactly by summation over (x, arm)."""
    p_s = pop.mass[:, s]
    px_cond = p_s / p_s.sum()
    ratio = pop.mass[:, 0] / p_s
    e_treat = pop.treat_prob[:, s - 1]
    e_control = 1.0 - e_treat

    # E[w(a,s) Y | S=s]: the received-arm indicator kills the other arm's term.
    num_treat = float(px_cond @ (e_treat * (1.0 / e_treat) * ratio * pop.mean_treat[:, s - 1]))
    num_control = float(
        px_cond @ (e_control * (1.0 / e_control) * ratio * pop.mean_control[:, s - 1])
    )
    den_treat = expected_weight(pop, s, TREAT_ARM)
    den_control = expected_weight(pop, s, CONTROL_ARM)
    return num_treat / den_treat - num_control / den_control


def tate_via_identification(pop: DiscretePopulation) -> float:
    """Weighted-route value: per-study normalized weighted contrasts mixed
    with the study-membership shares. Raises AssumptionViolationError if the
    population fails its positivity requirements."""
    pop.check_support()
    shares = pop.study_shares()
    deltas = np.array([_study_tate_weighted(pop, s) for s in range(1, pop.m + 1)])
    return float(shares @ deltas)


def random_population(
    stream: Stream,
    max_studies: int = 4,
    max_atoms: int = 6,
) -> DiscretePopulation:
    """A random population built to satisfy the mixing condition exactly:
    per-study effect deviations are recentred to have zero share-weighted
    mean at every covariate value."""
    m = int(stream.integers(1, max_studies + 1))
    k = int(stream.integers(2, max_atoms + 1))
    x_values = np.sort(stream.normal(k) * 1.5)
    x_values += np.arange(k) * 1e-3  # tie-break so atoms stay distinct

    gen = stream.generator
    mass = gen.gamma(2.0, 1.0, size=(k, m + 1)) + 0.05
    mass /= mass.sum()
    treat_prob = 0.2 + 0.6 * np.asarray(stream.uniform((k, m)))

    shares = mass[:, 1:].sum(axis=0)
    shares /= shares.sum()
    target_cate = np.asarray(stream.normal(k))
    deviations = 0.8 * np.asarray(stream.normal((k, m)))
    deviations -= (deviations @ shares)[:, None]
    cate = np.column_stack([target_cate, target_cate[:, None] + deviations])

    mean_control = np.asarray(stream.normal((k, m)))
    return DiscretePopulation(
        x_values=x_values,
        mass=mass,
        treat_prob=treat_prob,
        cate=cate,
        mean_treat=mean_control + cate[:, 1:],
        mean_control=mean_control,
    )


def violate_b4(
    pop: DiscretePopulation, stream: Stream, min_shift: float = 0.1
) -> DiscretePopulation:
    """Copy of ``pop`` with one study's conditional effect shifted by at
    least ``min_shift`` at the covariate value where the shift moves the
    weighted route the most."""
    shares = pop.study_shares()
    p_target = pop.mass[:, 0] / pop.mass[:, 0].sum()
    k_star = int(np.argmax(p_target))
    s_star = int(np.argmax(shares)) + 1
    shift = (min_shift + 0.2 * float(stream.uniform())) * (1 if stream.uniform() < 0.5 else -1)

    cate = pop.cate.copy()
    cate[k_star, s_star] += shift
    mean_treat = pop.mean_treat.copy()
    mean_treat[k_star, s_star - 1] += shift
    return DiscretePopulation(
        x_values=pop.x_values.copy(),
        mass=pop.mass.copy(),
        treat_prob=pop.treat_prob.copy(),
        cate=cate,
        mean_treat=mean_treat,
        mean_control=pop.mean_control.copy(),
    )


def sample_dataset(
    pop: DiscretePopulation, n: int, stream: Stream, outcome_sd: float = 0.3
) -> Dataset:
    """n i.i.d. units drawn from the population, with study outcomes drawn
    around the population arm means; links the estimator stack to the exact
    oracle values."""
    flat = pop.mass.ravel()
    draws = stream.categorical(flat / flat.sum(), n)
    k_idx, s_idx = np.divmod(draws, pop.m + 1)
    x = pop.x_values[k_idx]
    in_study = s_idx >= 1
    arm = np.full(n, -1, dtype=np.int64)
    outcome = np.full(n, np.nan)
    rows = np.flatnonzero(in_study)
    e = pop.treat_prob[k_idx[rows], s_idx[rows] - 1]
    arm[rows] = (np.asarray(stream.uniform(rows.size)) < e).astype(np.int64)
    means = np.where(
        arm[rows] == 1,
        pop.mean_treat[k_idx[rows], s_idx[rows] - 1],
        pop.mean_control[k_idx[rows], s_idx[rows] - 1],
    )
    outcome[rows] = means + outcome_sd * np.asarray(stream.normal(rows.size))
    return Dataset.from_arrays(s_idx, arm, outcome, x[:, None], pop.m)


def run_oracle_suite(
    n_random: int, seed: int = 0, agreement_tol: float = 1e-10, violation_floor: float = 1e-3
) -> dict:
    """Randomized check of the identification result.

    For each index we build one population satisfying the mixing condition
    (the two routes must agree within ``agreement_tol``) and one violating
    it by at least 0.1 in some cell (the routes must differ by more than
    ``violation_floor``). Returns counts of agreements and detections.
    """
    from .rng import SeedTree

    tree = SeedTree(seed)
    agree = 0
    detect = 0
    checker_ok = 0
    worst_gap = 0.0
    for i in range(n_random):
        stream = tree.derive("population", i).stream()
        pop = random_population(stream)
        gap = abs(tate_via_identification(pop) - true_tate_direct(pop))
        worst_gap = max(worst_gap, gap)
        if gap < agreement_tol:
            agree += 1
        if check_assumption_b4(pop):
            checker_ok += 1

        bad = violate_b4(pop, stream)
        bad_gap = abs(tate_via_identification(bad) - true_tate_direct(bad))
        if bad_gap > violation_floor and not check_assumption_b4(bad):
            detect += 1
    return {
        "n": n_random,
        "agree": agree,
        "checker_ok": checker_ok,
        "detect": detect,
        "worst_agreement_gap": worst_gap,
    }
