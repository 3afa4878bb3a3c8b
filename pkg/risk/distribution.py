from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from core.resilience import InvalidSpec

PROBABILITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Probability vector over a finite outcome index set.

    The array is copied and frozen on construction, so instances can be shared
    between workers.
    """

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise InvalidSpec("probabilities", p.shape, "must be a non-empty vector")
        if not np.all(np.isfinite(p)) or np.any(p < 0.0):
            raise InvalidSpec("probabilities", p.tolist(), "entries must be finite and >= 0")
        total = float(p.sum())
        if abs(total - 1.0) > PROBABILITY_TOL:
            raise InvalidSpec("probabilities", total, "must sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    @property
    def size(self) -> int:
        return int(self.probabilities.size)

    def support(self) -> np.ndarray:
        """Indices with strictly positive probability"""
        return np.flatnonzero(self.probabilities > 0.0)

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"DiscreteDistribution({np.array2string(self.probabilities, precision=4)})"

    @classmethod
    def uniform(cls, n: int) -> "DiscreteDistribution":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point(cls, n: int, index: int) -> "DiscreteDistribution":
        p = np.zeros(n)
        p[index] = 1.0
        return cls(p)

    @classmethod
    def from_weights(cls, weights: Sequence[float]) -> "DiscreteDistribution":
        """Normalise non-negative weights with a positive sum"""
        w = np.asarray(weights, dtype=float)
        total = float(w.sum())
        if not np.all(w >= 0.0) or total <= 0.0:
            raise InvalidSpec("weights", w.tolist(), "must be >= 0 with a positive sum")
        return cls(w / total)

    @classmethod
    def empirical(cls, indices: Sequence[int], n: int) -> "DiscreteDistribution":
        """Uniform measure over a sampled index multiset"""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            raise InvalidSpec("indices", [], "empirical measure needs at least one sample")
        return cls(np.bincount(idx, minlength=n) / idx.size)
