"""Deterministic, splittable random-number streams.

Streams are derived statelessly from a 64-bit root seed and a path of
(label, index) pairs, so any component can reconstruct its stream from the
root seed alone. Derivation is counter-based (hashing via
``numpy.random.SeedSequence`` spawn keys), which makes sibling streams
independent-quality and order-free: parallel consumers never share state.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

__all__ = ["SeedTree", "Stream"]


def _label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


@dataclass(frozen=True)
class SeedTree:
    """A root seed plus a derivation path of labeled indices."""

    root: int
    path: tuple[int, ...] = field(default=())

    def derive(self, label: str, index: int = 0) -> "SeedTree":
        """Child tree for (label, index); same arguments give the same child."""
        if index < 0:
            raise ValueError("index must be nonnegative")
        return SeedTree(self.root, self.path + (_label_key(label), index))

    def _sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=self.root, spawn_key=self.path)

    def stream(self) -> "Stream":
        """Fresh generator positioned at the start of this node's stream."""
        return Stream(np.random.Generator(np.random.PCG64(self._sequence())))

    def child_seed(self, label: str, index: int = 0) -> int:
        """A 64-bit integer seed for components that take a plain seed."""
        state = self.derive(label, index)._sequence().generate_state(2, np.uint32)
        return int(state[0]) | (int(state[1]) << 32)


class Stream:
    """Thin wrapper over ``numpy.random.Generator`` with the draw kinds the
    simulation and bootstrap layers need."""

    def __init__(self, generator: np.random.Generator):
        self._gen = generator

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normal(self, size=None) -> np.ndarray | float:
        return self._gen.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray | float:
        return self._gen.random(size)

    def bernoulli(self, p: float, size=None) -> np.ndarray | int:
        return (self._gen.random(size) < p).astype(np.int64)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def categorical(self, probs, size: int) -> np.ndarray:
        """``size`` draws from one categorical distribution ``probs``."""
        p = np.asarray(probs, dtype=float)
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        u = self._gen.random(size)
        return np.searchsorted(cdf, u, side="right").astype(np.int64)

    def categorical_rows(self, probs: np.ndarray) -> np.ndarray:
        """One draw per row of an (n, k) probability matrix."""
        p = np.asarray(probs, dtype=float)
        cdf = np.cumsum(p, axis=1)
        cdf[:, -1] = 1.0
        u = self._gen.random(p.shape[0])
        return (u[:, None] > cdf).sum(axis=1).astype(np.int64)

    def mvn_diagonal(self, mean, variances, size: int) -> np.ndarray:
        """``size`` draws from N(mean, diag(variances))."""
        mu = np.asarray(mean, dtype=float)
        sd = np.sqrt(np.asarray(variances, dtype=float))
        z = self._gen.standard_normal((size, mu.size))
        return mu + sd * z
