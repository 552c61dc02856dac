"""Design matrices from declarative model specifications.

A model spec is an ordered list of terms: an intercept (required, first),
main effects, polynomial powers, and pairwise interactions of raw
covariates. The textual form used in config files looks like
``"1 + x0 + x1 + x0^2 + x0:x1"``. Covariates are used on their raw scale;
categorical inputs must be pre-encoded as numeric indicators upstream.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import IndexOutOfRangeError, ParseError

__all__ = [
    "Intercept",
    "Main",
    "Power",
    "Interaction",
    "ModelSpec",
    "DesignMatrix",
    "build_design",
]


@dataclass(frozen=True)
class Intercept:
    def __str__(self) -> str:
        return "1"


@dataclass(frozen=True)
class Main:
    index: int

    def __str__(self) -> str:
        return f"x{self.index}"


@dataclass(frozen=True)
class Power:
    index: int
    degree: int

    def __post_init__(self):
        if self.degree < 2:
            raise ParseError("power terms need degree >= 2; use a main effect")

    def __str__(self) -> str:
        return f"x{self.index}^{self.degree}"


@dataclass(frozen=True)
class Interaction:
    first: int
    second: int

    def __post_init__(self):
        if self.first == self.second:
            raise ParseError("interaction of a covariate with itself; use a power term")

    def __str__(self) -> str:
        return f"x{self.first}:x{self.second}"


Term = Union[Intercept, Main, Power, Interaction]

_MAIN_RE = re.compile(r"^x(\d+)$")
_POWER_RE = re.compile(r"^x(\d+)\^(\d+)$")
_INTER_RE = re.compile(r"^x(\d+):x(\d+)$")


@dataclass(frozen=True)
class ModelSpec:
    """Ordered term list; exactly one intercept, required and first."""

    terms: tuple[Term, ...]

    def __post_init__(self):
        if not self.terms or not isinstance(self.terms[0], Intercept):
            raise ParseError("model spec must start with an intercept term")
        if sum(isinstance(t, Intercept) for t in self.terms) != 1:
            raise ParseError("model spec must contain exactly one intercept")
        normalized = [
            (min(t.first, t.second), max(t.first, t.second)) if isinstance(t, Interaction) else t
            for t in self.terms
        ]
        if len(set(map(repr, normalized))) != len(normalized):
            raise ParseError("duplicate terms in model spec")

    @property
    def q(self) -> int:
        return len(self.terms)

    def max_index(self) -> int:
        """Largest covariate index referenced, or -1 for intercept-only."""
        idx = -1
        for t in self.terms:
            if isinstance(t, Main):
                idx = max(idx, t.index)
            elif isinstance(t, Power):
                idx = max(idx, t.index)
            elif isinstance(t, Interaction):
                idx = max(idx, t.first, t.second)
        return idx

    def __str__(self) -> str:
        return " + ".join(str(t) for t in self.terms)

    @classmethod
    def parse(cls, text: str) -> "ModelSpec":
        """Parse the textual form, e.g. ``"1 + x0 + x0^2 + x0:x1"``."""
        terms: list[Term] = []
        for raw in text.split("+"):
            tok = raw.strip()
            if not tok:
                raise ParseError(f"empty term in model spec {text!r}")
            if tok == "1":
                terms.append(Intercept())
                continue
            m = _MAIN_RE.match(tok)
            if m:
                terms.append(Main(int(m.group(1))))
                continue
            m = _POWER_RE.match(tok)
            if m:
                terms.append(Power(int(m.group(1)), int(m.group(2))))
                continue
            m = _INTER_RE.match(tok)
            if m:
                terms.append(Interaction(int(m.group(1)), int(m.group(2))))
                continue
            raise ParseError(f"unrecognized model term {tok!r}")
        return cls(tuple(terms))


def intercept_plus_mains(p: int) -> ModelSpec:
    """The spec ``1 + x0 + ... + x(p-1)``."""
    return ModelSpec((Intercept(),) + tuple(Main(j) for j in range(p)))


@dataclass(frozen=True)
class DesignMatrix:
    """Evaluated terms per unit; column 0 is all ones, all entries finite."""

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or not np.all(v[:, 0] == 1.0) or not np.all(np.isfinite(v)):
            raise ParseError("design matrix must be finite with a leading column of ones")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return self.values.shape[1]

    def __array__(self, dtype=None):
        return np.asarray(self.values, dtype=dtype)


def build_design(x: np.ndarray, spec: ModelSpec) -> DesignMatrix:
    """Evaluate ``spec`` on an (n, p) covariate matrix, in term order."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, p = x.shape
    if spec.max_index() >= p:
        raise IndexOutOfRangeError(
            f"model spec references x{spec.max_index()} but data has p={p}"
        )
    cols = np.empty((n, spec.q))
    for j, term in enumerate(spec.terms):
        if isinstance(term, Intercept):
            cols[:, j] = 1.0
        elif isinstance(term, Main):
            cols[:, j] = x[:, term.index]
        elif isinstance(term, Power):
            cols[:, j] = x[:, term.index] ** term.degree
        else:
            cols[:, j] = x[:, term.first] * x[:, term.second]
    cols.flags.writeable = False
    return DesignMatrix(cols)
