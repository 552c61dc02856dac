"""Canonical in-memory representation of combined trial + target data.

A dataset holds ``m`` two-arm randomized studies (study ids 1..m) plus a
covariate-only sample from the target population (study id 0). Units are
stored columnwise in immutable numpy arrays; study 0 units carry no arm and
no outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyArmError,
    EmptyTargetError,
    MissingArmError,
    TargetOutcomeError,
    UnknownStudyError,
)

__all__ = ["Observation", "Dataset", "validate_dataset", "arm_sizes", "TREAT", "CONTROL"]

TREAT = 1
CONTROL = 0
_NO_ARM = -1  # sentinel for target units in the arm column


@dataclass(frozen=True)
class Observation:
    """One unit: study id (0 = target population), optional arm/outcome,
    covariate vector of fixed length p."""

    study: int
    arm: Optional[int]
    outcome: Optional[float]
    covariates: Sequence[float]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    """Validated columnar dataset. Immutable; safe for shared reads.

    Attributes
    ----------
    study : (n,) int array in {0..m}
    arm : (n,) int array; 1 treated, 0 control, -1 for target units
    outcome : (n,) float array; NaN for target units
    x : (n, p) float covariate matrix
    m : number of studies
    """

    study: np.ndarray
    arm: np.ndarray
    outcome: np.ndarray
    x: np.ndarray
    m: int
    counts: np.ndarray = field(repr=False)  # (m+1,) units per source

    @property
    def n(self) -> int:
        return self.study.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def n_target(self) -> int:
        return int(self.counts[0])

    @cached_property
    def _index_by_source(self) -> list[np.ndarray]:
        order = np.argsort(self.study, kind="stable")
        bounds = np.cumsum(self.counts)
        return [order[start:stop] for start, stop in zip(np.r_[0, bounds[:-1]], bounds)]

    def study_indices(self, s: int) -> np.ndarray:
        """Row indices of source s (0 = target), in dataset order."""
        if not 0 <= s <= self.m:
            raise UnknownStudyError(f"study {s} outside 0..{self.m}")
        return self._index_by_source[s]

    @classmethod
    def from_arrays(cls, study, arm, outcome, x, m: int) -> "Dataset":
        """Build and validate a dataset from columnar arrays.

        ``arm`` may use -1 (or anything negative) for target units;
        ``outcome`` must be NaN for target units.
        """
        study = np.asarray(study, dtype=np.int64).copy()
        arm = np.asarray(arm, dtype=np.int64).copy()
        outcome = np.asarray(outcome, dtype=float).copy()
        x = np.atleast_2d(np.asarray(x, dtype=float)).copy()
        if x.shape[0] != study.shape[0]:
            x = x.T
        n = study.shape[0]
        if n == 0:
            raise DimensionMismatchError("no observations supplied")
        if m < 1:
            raise UnknownStudyError("m must be >= 1")
        if arm.shape != (n,) or outcome.shape != (n,) or x.shape[0] != n:
            raise DimensionMismatchError("column lengths disagree")

        if study.min() < 0 or study.max() > m:
            bad = study[(study < 0) | (study > m)][0]
            raise UnknownStudyError(f"study id {bad} outside 0..{m}")

        is_target = study == 0
        if not is_target.any():
            raise EmptyTargetError("no target-population units (study 0)")
        if np.any(arm[is_target] >= 0):
            raise TargetOutcomeError("target units must not carry an arm")
        if np.any(np.isfinite(outcome[is_target])):
            raise TargetOutcomeError("target units must not carry an outcome")
        arm[is_target] = _NO_ARM
        outcome[is_target] = np.nan

        in_study = ~is_target
        if np.any((arm[in_study] != TREAT) & (arm[in_study] != CONTROL)):
            raise MissingArmError("study units need a binary arm (0/1)")
        if not np.all(np.isfinite(outcome[in_study])):
            raise MissingArmError("study units need a finite outcome")
        if not np.all(np.isfinite(x)):
            raise DimensionMismatchError("covariates must be finite")

        counts = np.bincount(study, minlength=m + 1)
        treated = np.bincount(study[arm == TREAT], minlength=m + 1)
        controls = np.bincount(study[arm == CONTROL], minlength=m + 1)
        short = np.flatnonzero((treated[1:] == 0) | (controls[1:] == 0))
        if short.size:
            raise EmptyArmError(f"study {short[0] + 1} lacks a treated or a control unit")

        return cls(
            study=_readonly(study),
            arm=_readonly(arm),
            outcome=_readonly(outcome),
            x=_readonly(x),
            m=m,
            counts=_readonly(counts),
        )

    def to_observations(self) -> list[Observation]:
        out = []
        for i in range(self.n):
            s = int(self.study[i])
            if s == 0:
                out.append(Observation(0, None, None, tuple(self.x[i])))
            else:
                out.append(Observation(s, int(self.arm[i]), float(self.outcome[i]), tuple(self.x[i])))
        return out


def validate_dataset(raw: Iterable[Observation], m: int) -> Dataset:
    """Validate a sequence of observations into an immutable Dataset.

    Raises MissingArmError, TargetOutcomeError, EmptyArmError,
    DimensionMismatchError or UnknownStudyError on the first violation found.
    Idempotent: validating a Dataset's own observations reproduces it.
    """
    rows = list(raw)
    if not rows:
        raise DimensionMismatchError("no observations supplied")
    p = len(rows[0].covariates)
    study = np.empty(len(rows), dtype=np.int64)
    arm = np.full(len(rows), _NO_ARM, dtype=np.int64)
    outcome = np.full(len(rows), np.nan)
    x = np.empty((len(rows), p))
    for i, obs in enumerate(rows):
        if len(obs.covariates) != p:
            raise DimensionMismatchError(
                f"unit {i}: expected {p} covariates, got {len(obs.covariates)}"
            )
        study[i] = obs.study
        x[i] = obs.covariates
        if obs.study == 0:
            if obs.arm is not None or obs.outcome is not None:
                raise TargetOutcomeError(f"unit {i}: target unit carries arm/outcome")
        else:
            if obs.arm is None or obs.outcome is None:
                raise MissingArmError(f"unit {i}: study unit lacks arm/outcome")
            arm[i] = obs.arm
            outcome[i] = obs.outcome
    return Dataset.from_arrays(study, arm, outcome, x, m)


def arm_sizes(ds: Dataset, s: int) -> tuple[int, int]:
    """(treated, control) unit counts for study s; both are >= 1."""
    if not 1 <= s <= ds.m:
        raise UnknownStudyError(f"study {s} outside 1..{ds.m}")
    sel = ds.study == s
    n_treat = int(np.count_nonzero(ds.arm[sel] == TREAT))
    return n_treat, int(sel.sum()) - n_treat
