"""
Multi-episodic regularized least squares for linear value models.

Targets are c_t + alpha_t * sigma~_t, where sigma~_t is the risk mapping applied
to the empirical measure of the N successors stored with each step. The normal
equations are maintained incrementally with rank-one inverse updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Protocol, Sequence

import numpy as np
import pandas as pd
import scipy.linalg

from core.logging import logger
from core.monitoring import metrics
from core.resilience import DimensionMismatch, NumericalBreakdown, require, surface_io_error
from core.rng import stream
from core.schemas import RiskMappingSpec
from mdp.model import (
    FiniteMdp,
    StationaryPolicy,
    induced_chain,
    restarted_chain,
    simulate_episode,
    stationary_distribution,
)
from mdp.solver import pair_operator
from risk.mappings import empirical_risk

BREAKDOWN_TOL = 1e-12
DEFAULT_REG_SCALE = 1e-6


@dataclass
class LsAccumulator:
    """Running inverse of lambda I + sum phi phi^T and the right-hand side"""

    lambda_reg: float
    inverse: np.ndarray
    rhs: np.ndarray
    gram: np.ndarray
    count: int = 0

    @classmethod
    def empty(cls, dim: int, lambda_reg: float) -> "LsAccumulator":
        require(lambda_reg > 0.0, "lambda_reg", lambda_reg, "must be > 0")
        return cls(
            lambda_reg=lambda_reg,
            inverse=np.eye(dim) / lambda_reg,
            rhs=np.zeros(dim),
            gram=np.zeros((dim, dim)),
        )

    @property
    def dim(self) -> int:
        return int(self.rhs.size)

    def system_matrix(self) -> np.ndarray:
        return self.lambda_reg * np.eye(self.dim) + self.gram

    def audit(self) -> float:
        """Frobenius distance of inverse * (lambda I + gram) from the identity"""
        return float(np.linalg.norm(self.inverse @ self.system_matrix() - np.eye(self.dim), "fro"))

    def is_positive_definite(self) -> bool:
        try:
            scipy.linalg.cholesky(0.5 * (self.inverse + self.inverse.T))
        except np.linalg.LinAlgError:
            return False
        return True


def ls_update(acc: LsAccumulator, phi: np.ndarray, target: float) -> LsAccumulator:
    """Sherman-Morrison step for one (phi, target) sample, in place"""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (acc.dim,):
        raise DimensionMismatch("phi", acc.dim, int(phi.size))
    u = acc.inverse @ phi
    denominator = 1.0 + float(phi @ u)
    if denominator <= BREAKDOWN_TOL:
        raise NumericalBreakdown(f"rank-one update denominator {denominator:.3e}")
    acc.inverse -= np.outer(u, u) / denominator
    acc.rhs += phi * target
    acc.gram += np.outer(phi, phi)
    acc.count += 1
    return acc


def ls_update_batch(acc: LsAccumulator, phis: np.ndarray, targets: np.ndarray) -> LsAccumulator:
    for phi, target in zip(phis, targets):
        ls_update(acc, phi, float(target))
    metrics.increment("rank_one_updates", len(targets))
    return acc


def ls_solve(acc: LsAccumulator) -> np.ndarray:
    return acc.inverse @ acc.rhs


def ls_merge(accumulators: Sequence[LsAccumulator]) -> LsAccumulator:
    """Sum of several accumulators; the inverse is refactorised from the gram"""
    first = accumulators[0]
    gram = sum((a.gram for a in accumulators), np.zeros_like(first.gram))
    rhs = sum((a.rhs for a in accumulators), np.zeros_like(first.rhs))
    merged = LsAccumulator(
        lambda_reg=first.lambda_reg,
        inverse=np.empty_like(gram),
        rhs=rhs,
        gram=gram,
        count=sum(a.count for a in accumulators),
    )
    factor = scipy.linalg.cho_factor(merged.system_matrix())
    merged.inverse = scipy.linalg.cho_solve(factor, np.eye(merged.dim))
    return merged


def ls_weighted_error(acc: LsAccumulator, theta_a: np.ndarray, theta_b: np.ndarray) -> float:
    """<d, (lambda I + gram) d> for d = theta_a - theta_b"""
    delta = np.asarray(theta_a, dtype=float) - np.asarray(theta_b, dtype=float)
    return float(delta @ acc.system_matrix() @ delta)


@dataclass
class TransitionBatch:
    """Visited-state samples of one outer iteration.

    ``successor_phi`` holds the features of the N sampled successors of every
    step, shape (T, N, M).
    """

    phi: np.ndarray
    costs: np.ndarray
    discounts: np.ndarray
    successor_phi: np.ndarray

    @property
    def size(self) -> int:
        return int(self.costs.size)

    @classmethod
    def empty(cls, dim: int, batch_size: int) -> "TransitionBatch":
        return cls(np.zeros((0, dim)), np.zeros(0), np.zeros(0), np.zeros((0, batch_size, dim)))

    @classmethod
    def concat(cls, batches: Sequence["TransitionBatch"]) -> "TransitionBatch":
        return cls(
            phi=np.concatenate([b.phi for b in batches]),
            costs=np.concatenate([b.costs for b in batches]),
            discounts=np.concatenate([b.discounts for b in batches]),
            successor_phi=np.concatenate([b.successor_phi for b in batches]),
        )

    def targets(self, spec: RiskMappingSpec, theta: np.ndarray) -> np.ndarray:
        if self.size == 0:
            return np.zeros(0)
        successor_values = self.successor_phi @ theta
        return self.costs + self.discounts * empirical_risk(spec, successor_values)

    def mean_squared_norm(self) -> float:
        return float((self.phi ** 2).sum(axis=1).mean()) if self.size else 0.0


class EpisodeSource(Protocol):
    """Anything that can simulate a fresh batch of episodes under a fixed policy"""

    def collect(self, spec: RiskMappingSpec, seed: int, iteration: int) -> TransitionBatch:
        ...

    @property
    def dim(self) -> int:
        ...


def one_hot_features(n_states: int) -> np.ndarray:
    return np.eye(n_states)


@dataclass
class MdpEpisodeSource:
    """Episodes of a tabular MDP under a stationary policy, with a feature matrix"""

    mdp: FiniteMdp
    policy: StationaryPolicy
    features: np.ndarray
    episodes: int = 200
    max_steps: int = 1000

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def collect(self, spec: RiskMappingSpec, seed: int, iteration: int) -> TransitionBatch:
        states, costs, discounts, successors = [], [], [], []
        for e in range(self.episodes):
            episode = simulate_episode(self.mdp, self.policy, spec,
                                       stream(seed, "mdp-episode", iteration, e), self.max_steps)
            for step in episode.steps:
                states.append(step.state)
                costs.append(step.cost)
                discounts.append(step.discount)
                successors.append(step.successors)
        metrics.increment("episodes", self.episodes)
        metrics.increment("steps", len(states))
        if not states:
            return TransitionBatch.empty(self.dim, spec.batch_size)
        return TransitionBatch(
            phi=self.features[np.array(states)],
            costs=np.array(costs),
            discounts=np.array(discounts),
            successor_phi=self.features[np.array(successors)],
        )


@dataclass
class LsResult:
    thetas: List[np.ndarray] = field(default_factory=list)
    objectives: List[float] = field(default_factory=list)
    residuals: List[float] = field(default_factory=list)
    lambdas: List[float] = field(default_factory=list)
    samples: List[int] = field(default_factory=list)

    @property
    def theta(self) -> np.ndarray:
        return self.thetas[-1]


def default_lambda(batch: TransitionBatch) -> float:
    scale = batch.mean_squared_norm()
    return DEFAULT_REG_SCALE * (scale if scale > 0.0 else 1.0)


def evaluate_policy_ls(
    source: EpisodeSource,
    spec: RiskMappingSpec,
    outer_iters: int,
    lambda_reg: Optional[float] = None,
    theta0: Optional[np.ndarray] = None,
    seed: int = 0,
    on_iterate: Optional[Callable[[int, np.ndarray, float, float], None]] = None,
) -> LsResult:
    """Outer fixed-point loop: theta^{l+1} = LS fit to targets built with theta^l.

    Each outer iteration simulates fresh episodes; every visited state counts
    once in the objective.
    """
    require(outer_iters >= 1, "outer_iters", outer_iters, "must be >= 1")
    theta = np.zeros(source.dim) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    if theta.shape != (source.dim,):
        raise DimensionMismatch("theta0", source.dim, int(theta.size))
    result = LsResult(thetas=[theta])
    for iteration in range(outer_iters):
        with metrics.phase("collect"):
            batch = source.collect(spec, seed, iteration)
        targets = batch.targets(spec, theta)
        lam = lambda_reg if lambda_reg is not None else default_lambda(batch)
        with metrics.phase("least_squares"):
            acc = ls_update_batch(LsAccumulator.empty(source.dim, lam), batch.phi, targets)
            updated = ls_solve(acc)
        objective = float(np.mean((batch.phi @ updated - targets) ** 2)) if batch.size else 0.0
        residual = float(np.abs(updated - theta).max())
        theta = updated
        result.thetas.append(theta)
        result.objectives.append(objective)
        result.residuals.append(residual)
        result.lambdas.append(lam)
        result.samples.append(batch.size)
        logger.info(f"LS iteration {iteration + 1}/{outer_iters}: {batch.size} samples, "
                    f"objective {objective:.4f}, step {residual:.3e}")
        if on_iterate is not None:
            on_iterate(iteration + 1, theta, objective, residual)
    return result


def evaluate_policy_projected(mdp: FiniteMdp, policy: StationaryPolicy, spec: RiskMappingSpec,
                              features: np.ndarray, outer_iters: int,
                              theta0: Optional[np.ndarray] = None) -> List[np.ndarray]:
    """Projected fixed-point loop with exact sigma and stationary weights.

    Weights come from the stationary distribution of the restarted chain,
    restricted to non-terminal states and renormalised.
    """
    features = np.asarray(features, dtype=float)
    if features.shape[0] != mdp.n_states:
        raise DimensionMismatch("features", mdp.n_states, features.shape[0])
    chain = restarted_chain(induced_chain(mdp, policy), np.flatnonzero(mdp.terminal), mdp.restart)
    q = stationary_distribution(chain).probabilities.copy()
    q[mdp.terminal] = 0.0
    q = q / q.sum()
    root = np.sqrt(q)

    pairs = mdp.policy_pairs(policy)
    operator = pair_operator(mdp, spec, pairs)
    cost, discount = mdp.pair_cost[pairs], mdp.pair_discount[pairs]
    theta = np.zeros(features.shape[1]) if theta0 is None else np.asarray(theta0, dtype=float)
    thetas = [theta]
    for _ in range(outer_iters):
        target = cost + discount * operator(features @ theta)
        theta, *_ = scipy.linalg.lstsq(root[:, None] * features, root * target)
        thetas.append(theta)
    return thetas


def write_iterates_csv(result: LsResult, path: str | Path) -> Path:
    """One row per outer iteration: diagnostics followed by theta components"""
    path = Path(path)
    rows = []
    for k, theta in enumerate(result.thetas[1:]):
        row = {
            "iteration": k + 1,
            "samples": result.samples[k],
            "lambda": result.lambdas[k],
            "objective": result.objectives[k],
            "residual": result.residuals[k],
        }
        row.update({f"theta_{m}": float(x) for m, x in enumerate(theta)})
        rows.append(row)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(rows).to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise surface_io_error(path, e) from e
    return path
