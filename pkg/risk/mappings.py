"""
Exact and sampled evaluation of coherent transition risk mappings.

All kernels work on row batches: ``probs`` and ``values`` of shape (R, k),
one measure per row, restricted to its support. Single evaluations go through
the same code with R = 1.
"""

from __future__ import annotations

import itertools
import math
from typing import Literal, Sequence, Tuple

import numpy as np

from core.config import enumeration_cap
from core.resilience import (
    DimensionMismatch,
    EnumerationCapExceeded,
    InvalidSpec,
    UnsupportedBase,
)
from core.rng import RandomStream
from core.schemas import RiskMappingSpec
from risk.distribution import DiscreteDistribution

Method = Literal["auto", "tuples"]


def _base_rows(spec: RiskMappingSpec, values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Base mapping of every row measure (no mini-batching, no mixture)"""
    mean = np.einsum("rk,rk->r", weights, values)
    if spec.base == "expectation":
        return mean
    if spec.base == "worst_case":
        return np.where(weights > 0.0, values, -np.inf).max(axis=1)
    if spec.base == "mean_semideviation":
        upper = np.maximum(values - mean[:, None], 0.0)
        return mean + spec.coefficient * np.einsum("rk,rk->r", weights, upper)
    # avar: eta ranges over the row's own values, the breakpoints of a convex
    # piecewise-linear objective
    excess = np.maximum(values[:, None, :] - values[:, :, None], 0.0)
    objective = values + np.einsum("rek,rk->re", excess, weights) / spec.level
    return objective.min(axis=1)


def _enumerates(spec: RiskMappingSpec, support_size: int, method: Method) -> bool:
    if spec.batch_size == 1 or support_size == 1:
        return False
    return method == "tuples" or spec.base in ("mean_semideviation", "avar")


def _check_cap(support_size: int, batch_size: int) -> None:
    cap = enumeration_cap()
    if support_size ** batch_size > cap:
        raise EnumerationCapExceeded(support_size, batch_size, cap)


def _max_jumps(sorted_probs: np.ndarray, n: int) -> np.ndarray:
    """P(max of N draws = k-th lowest level) per row, from ascending-sorted probabilities.

    F_k^N - F_{k-1}^N is factored as p_k * sum_j F_k^j F_{k-1}^(N-1-j), which keeps
    full relative precision for small p_k.
    """
    cdf = np.cumsum(sorted_probs, axis=1)
    cdf[:, -1] = 1.0
    below = np.concatenate([np.zeros((cdf.shape[0], 1)), cdf[:, :-1]], axis=1)
    j = np.arange(n)
    ratio = (cdf[..., None] ** j * below[..., None] ** (n - 1 - j)).sum(axis=-1)
    return sorted_probs * ratio


def _worst_case_batch(probs: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    """E max of N i.i.d. draws via jumps of the distribution function to the power N"""
    order = np.argsort(values, axis=1, kind="stable")
    v = np.take_along_axis(values, order, axis=1)
    jumps = _max_jumps(np.take_along_axis(probs, order, axis=1), n)
    return np.einsum("rk,rk->r", jumps, v)


def _multiset_batch(spec: RiskMappingSpec, probs: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Mini-batch expectation over count vectors with multinomial weights"""
    n = spec.batch_size
    rows, k = probs.shape
    result = np.zeros(rows)
    for combo in itertools.combinations_with_replacement(range(k), n):
        counts = np.bincount(combo, minlength=k)
        coefficient = math.factorial(n) / math.prod(math.factorial(c) for c in counts)
        weight = coefficient * np.prod(probs ** counts, axis=1)
        empirical = np.broadcast_to(counts / n, (rows, k))
        result += weight * _base_rows(spec, values, empirical)
    return result


def _tuple_batch(spec: RiskMappingSpec, probs: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Mini-batch expectation by literal enumeration of ordered N-tuples"""
    n = spec.batch_size
    rows, k = probs.shape
    result = np.zeros(rows)
    for draw in itertools.product(range(k), repeat=n):
        weight = np.prod(probs[:, list(draw)], axis=1)
        empirical = np.broadcast_to(np.bincount(draw, minlength=k) / n, (rows, k))
        result += weight * _base_rows(spec, values, empirical)
    return result


def _risk_rows(spec: RiskMappingSpec, probs: np.ndarray, values: np.ndarray,
               method: Method = "auto") -> np.ndarray:
    """Full mapping (mini-batch and mixture) for support-restricted rows"""
    n = spec.batch_size
    k = probs.shape[1]
    if n == 1 or k == 1:
        sigma = _base_rows(spec, values, probs)
    elif method == "tuples":
        _check_cap(k, n)
        sigma = _tuple_batch(spec, probs, values)
    elif spec.base == "expectation":
        sigma = np.einsum("rk,rk->r", probs, values)
    elif spec.base == "worst_case":
        sigma = _worst_case_batch(probs, values, n)
    else:
        _check_cap(k, n)
        sigma = _multiset_batch(spec, probs, values)

    if spec.mixture_weight != 1.0:
        mean = np.einsum("rk,rk->r", probs, values)
        sigma = (1.0 - spec.mixture_weight) * mean + spec.mixture_weight * sigma
    # roundoff only; the exact value always lies in the support range
    return np.clip(sigma, values.min(axis=1), values.max(axis=1))


def _support_values(dist: DiscreteDistribution, values: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    v = np.asarray(values, dtype=float)
    if v.shape != (dist.size,):
        raise DimensionMismatch("values", dist.size, int(v.size))
    support = dist.support()
    on_support = v[support]
    if not np.all(np.isfinite(on_support)):
        raise InvalidSpec("values", on_support.tolist(), "must be finite on the support")
    return support, on_support


def evaluate_risk(spec: RiskMappingSpec, dist: DiscreteDistribution, values: Sequence[float],
                  method: Method = "auto") -> float:
    """Exact sigma(P, v) for one transition distribution.

    ``method="tuples"`` enumerates ordered N-tuples literally; the default uses
    count vectors (and the distribution-function power for WorstCase).
    """
    support, v = _support_values(dist, values)
    p = dist.probabilities[support]
    return float(_risk_rows(spec, p[None, :], v[None, :], method)[0])


def empirical_risk(spec: RiskMappingSpec, sampled_values: np.ndarray) -> np.ndarray:
    """Risk estimate per row of sampled successor values, shape (T, N)"""
    sampled = np.atleast_2d(np.asarray(sampled_values, dtype=float))
    weights = np.full(sampled.shape, 1.0 / sampled.shape[1])
    sigma = _base_rows(spec, sampled, weights)
    if spec.mixture_weight != 1.0:
        sigma = (1.0 - spec.mixture_weight) * sampled.mean(axis=1) + spec.mixture_weight * sigma
    return sigma


def sample_risk_estimate(spec: RiskMappingSpec, dist: DiscreteDistribution,
                         values: Sequence[float], rng: RandomStream) -> Tuple[float, Tuple[int, ...]]:
    """Unbiased estimate of sigma(P, v) from N i.i.d. successors.

    Returns the estimate and the drawn outcome indices.
    """
    support, v = _support_values(dist, values)
    picks = rng.choice(support.size, size=spec.batch_size, p=dist.probabilities[support])
    estimate = float(empirical_risk(spec, v[picks][None, :])[0])
    return estimate, tuple(int(i) for i in support[picks])


def sample_risk_estimates(spec: RiskMappingSpec, dist: DiscreteDistribution,
                          values: Sequence[float], rng: RandomStream, size: int) -> np.ndarray:
    """``size`` independent estimates in one vectorised draw"""
    support, v = _support_values(dist, values)
    picks = rng.choice(support.size, size=(size, spec.batch_size), p=dist.probabilities[support])
    return empirical_risk(spec, v[picks])


def worst_case_dual_weights(dist: DiscreteDistribution, values: Sequence[float],
                            batch_size: int) -> np.ndarray:
    """Dual probabilities mu with sigma = <mu, v> for the WorstCase mini-batch.

    Equal values are pooled into one atom before the jumps are taken; the
    pooled jump is shared among tied outcomes in proportion to p.
    """
    support, v = _support_values(dist, values)
    p = dist.probabilities[support]
    levels, atom = np.unique(v, return_inverse=True)
    pooled = np.bincount(atom, weights=p, minlength=levels.size)
    if batch_size == 1:
        jumps = np.zeros(levels.size)
        jumps[-1] = 1.0
    else:
        jumps = _max_jumps(pooled[None, :], batch_size)[0]
    mu = np.zeros(dist.size)
    mu[support] = jumps[atom] * p / pooled[atom]
    return mu


def _distortion_rows(spec: RiskMappingSpec, probs: np.ndarray) -> np.ndarray:
    if spec.base == "expectation":
        return np.zeros(probs.shape[0])
    if spec.base != "worst_case":
        raise UnsupportedBase(spec.base, "distortion_coefficient")
    n = spec.batch_size
    if probs.shape[1] == 1:
        return np.zeros(probs.shape[0])
    if n == 1:
        kappa = ((1.0 - probs) / probs).max(axis=1)
    else:
        # outcome ranked lowest gets p^N, ranked highest gets 1 - (1 - p)^N
        lowest = 1.0 - probs ** (n - 1)
        highest = ((1.0 - probs)[..., None] ** np.arange(1, n)).sum(axis=-1)
        kappa = np.maximum(lowest, highest).max(axis=1)
    return spec.mixture_weight * kappa


def distortion_coefficient(spec: RiskMappingSpec, dist: DiscreteDistribution) -> float:
    """Largest relative deviation |mu_j - p_j| / p_j over all orderings of the support"""
    p = dist.probabilities[dist.support()]
    return float(_distortion_rows(spec, p[None, :])[0])


class RiskOperator:
    """Compiled sigma over many rows that share an outcome space.

    Rows are stored sparsely (CSR triplet ``row_ptr``, ``col_idx``, ``probs``)
    and grouped by support size, so one call evaluates sigma for every row with
    a handful of vectorised kernels. Zero-probability entries are dropped.
    """

    def __init__(self, spec: RiskMappingSpec, row_ptr: np.ndarray, col_idx: np.ndarray,
                 probs: np.ndarray, method: Method = "auto"):
        self.spec = spec
        self.method = method
        row_ptr = np.asarray(row_ptr, dtype=np.int64)
        col_idx = np.asarray(col_idx, dtype=np.int64)
        probs = np.asarray(probs, dtype=float)
        self.n_rows = row_ptr.size - 1

        keep = probs > 0.0
        row_of = np.repeat(np.arange(self.n_rows), np.diff(row_ptr))[keep]
        col_idx, probs = col_idx[keep], probs[keep]
        sizes = np.bincount(row_of, minlength=self.n_rows)
        if np.any(sizes == 0):
            raise InvalidSpec("rows", int(np.flatnonzero(sizes == 0)[0]), "row has empty support")
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])

        self._groups = []
        for k in np.unique(sizes):
            rows = np.flatnonzero(sizes == k)
            gather = starts[rows, None] + np.arange(k)
            if _enumerates(spec, int(k), method):
                _check_cap(int(k), spec.batch_size)
            self._groups.append((rows, col_idx[gather], probs[gather]))

    @classmethod
    def from_distributions(cls, spec: RiskMappingSpec,
                           dists: Sequence[DiscreteDistribution]) -> "RiskOperator":
        ptr = np.concatenate([[0], np.cumsum([d.size for d in dists])])
        cols = np.concatenate([np.arange(d.size) for d in dists])
        probs = np.concatenate([d.probabilities for d in dists])
        return cls(spec, ptr, cols, probs)

    def __call__(self, values: np.ndarray) -> np.ndarray:
        """sigma for every row, reading successor values from ``values``"""
        values = np.asarray(values, dtype=float)
        out = np.empty(self.n_rows)
        for rows, cols, probs in self._groups:
            out[rows] = _risk_rows(self.spec, probs, values[cols], self.method)
        return out

    def distortion(self) -> float:
        """Maximum distortion coefficient over all rows"""
        return max(float(_distortion_rows(self.spec, probs).max()) for _, _, probs in self._groups)
