"""
Exact tabular solvers for risk-averse policy evaluation and control.

Every Bellman sweep evaluates sigma exactly through a compiled
:class:`risk.mappings.RiskOperator`. Iterations start from v = 0 and stop once
the sup-norm residual guarantees the returned vector is within ``tol`` of the
fixed point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np

from core.logging import logger
from core.monitoring import metrics
from core.resilience import (
    DimensionMismatch,
    NoContraction,
    UnsupportedBase,
    require,
    surface_io_error,
)
from core.schemas import RiskMappingSpec
from mdp.model import FiniteMdp, StationaryPolicy, gather_positions
from risk.mappings import RiskOperator

STALL_LIMIT = 50
DEFAULT_MAX_ITER = 100_000


@dataclass
class SolveReport:
    value: np.ndarray
    iterations: int
    residual_history: List[float] = field(default_factory=list)
    contraction_estimate: float = 0.0

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else 0.0

    def to_dict(self) -> dict:
        return {
            "value": [float(x) for x in self.value],
            "iterations": self.iterations,
            "residual_history": [float(r) for r in self.residual_history],
            "contraction_estimate": float(self.contraction_estimate),
        }


def pair_operator(mdp: FiniteMdp, spec: RiskMappingSpec,
                  pairs: Optional[np.ndarray] = None) -> RiskOperator:
    """sigma over the transition rows of the given pairs (all pairs by default)"""
    if pairs is None:
        return RiskOperator(spec, mdp.row_ptr, mdp.row_idx, mdp.row_prob)
    pos, owner = gather_positions(mdp.row_ptr, pairs)
    ptr = np.concatenate([[0], np.cumsum(np.bincount(owner, minlength=pairs.size))])
    return RiskOperator(spec, ptr, mdp.row_idx[pos], mdp.row_prob[pos])


def contraction_bound(operator: RiskOperator, discounts: np.ndarray) -> Optional[float]:
    """alpha * sqrt(1 + kappa), or None when kappa is not computable"""
    try:
        kappa = operator.distortion()
    except UnsupportedBase:
        return None
    return float(discounts.max()) * math.sqrt(1.0 + kappa)


def _check_bound(bound: Optional[float], label: str) -> None:
    if bound is None:
        logger.debug(f"{label}: no distortion bound for this spec, monitoring residuals only")
    elif bound >= 1.0:
        logger.warning(f"{label}: alpha*sqrt(1+kappa) = {bound:.4f} >= 1, convergence not guaranteed")


def _fixed_point(step: Callable[[np.ndarray], np.ndarray], n: int, discount: float,
                 tol: float, max_iter: int, label: str) -> SolveReport:
    v = np.zeros(n)
    history: List[float] = []
    threshold = tol * (1.0 - discount) / discount
    stalled = 0
    for iteration in range(1, max_iter + 1):
        updated = step(v)
        residual = float(np.abs(updated - v).max()) if n else 0.0
        history.append(residual)
        v = updated
        logger.debug(f"{label} iteration {iteration}: residual {residual:.3e}")
        if residual <= threshold:
            break
        if len(history) > 1 and residual >= history[-2]:
            stalled += 1
            if stalled >= STALL_LIMIT:
                raise NoContraction(iteration, residual)
        else:
            stalled = 0
    else:
        raise NoContraction(max_iter, history[-1])

    ratios = [b / a for a, b in zip(history, history[1:]) if a > 0.0]
    report = SolveReport(value=v, iterations=len(history), residual_history=history,
                         contraction_estimate=max(ratios) if ratios else 0.0)
    metrics.increment("bellman_sweeps", report.iterations)
    logger.info(f"{label} converged in {report.iterations} iterations "
                f"(residual {report.residual:.2e}, ratio {report.contraction_estimate:.4f})")
    return report


def evaluate_policy_finite(mdp: FiniteMdp, policy: StationaryPolicy, spec: RiskMappingSpec,
                           horizon: int, terminal_cost: np.ndarray,
                           discounted: bool = False) -> np.ndarray:
    """Backward recursion v_t = c + [alpha] sigma(P, v_{t+1}) from v_T = terminal_cost"""
    terminal_cost = np.asarray(terminal_cost, dtype=float)
    if terminal_cost.shape != (mdp.n_states,):
        raise DimensionMismatch("terminal_cost", mdp.n_states, int(terminal_cost.size))
    require(horizon >= 0, "horizon", horizon, "must be >= 0")
    pairs = mdp.policy_pairs(policy)
    operator = pair_operator(mdp, spec, pairs)
    cost = mdp.pair_cost[pairs]
    discount = mdp.pair_discount[pairs] if discounted else 1.0
    v = terminal_cost.copy()
    for _ in range(horizon):
        v = cost + discount * operator(v)
    return v


def evaluate_policy_exact(mdp: FiniteMdp, policy: StationaryPolicy, spec: RiskMappingSpec,
                          tol: float = 1e-9, max_iter: int = DEFAULT_MAX_ITER) -> SolveReport:
    """Fixed point of v = c^pi + alpha sigma(P^pi, v)"""
    pairs = mdp.policy_pairs(policy)
    operator = pair_operator(mdp, spec, pairs)
    cost = mdp.pair_cost[pairs]
    discount = mdp.pair_discount[pairs]
    _check_bound(contraction_bound(operator, discount), "Policy evaluation")
    return _fixed_point(lambda v: cost + discount * operator(v), mdp.n_states,
                        mdp.discount, tol, max_iter, f"Policy evaluation ({spec.label})")


def bellman_q_values(mdp: FiniteMdp, spec: RiskMappingSpec, values: np.ndarray,
                     operator: Optional[RiskOperator] = None) -> np.ndarray:
    """c(i, u) + alpha(i, u) sigma(P(i, u), v) for every pair"""
    values = np.asarray(values, dtype=float)
    if values.shape != (mdp.n_states,):
        raise DimensionMismatch("values", mdp.n_states, int(values.size))
    operator = operator or pair_operator(mdp, spec)
    return mdp.pair_cost + mdp.pair_discount * operator(values)


def _state_minimum(mdp: FiniteMdp, q: np.ndarray) -> np.ndarray:
    return np.minimum.reduceat(q, mdp.state_ptr[:-1])


def greedy_policy(mdp: FiniteMdp, spec: RiskMappingSpec, values: np.ndarray,
                  operator: Optional[RiskOperator] = None) -> StationaryPolicy:
    """Argmin of the Bellman right-hand side, lowest action id on ties"""
    q = bellman_q_values(mdp, spec, values, operator)
    return _greedy_from_q(mdp, q)


def _greedy_from_q(mdp: FiniteMdp, q: np.ndarray) -> StationaryPolicy:
    best = _state_minimum(mdp, q)[mdp.pair_state]
    hits = np.flatnonzero(q <= best + 1e-12 * np.maximum(1.0, np.abs(best)))
    _, first = np.unique(mdp.pair_state[hits], return_index=True)
    return StationaryPolicy(mdp.pair_action[hits[first]])


def value_iteration_optimal(mdp: FiniteMdp, spec: RiskMappingSpec, tol: float = 1e-9,
                            max_iter: int = DEFAULT_MAX_ITER) -> Tuple[SolveReport, StationaryPolicy]:
    """Optimal values v* and a greedy policy"""
    operator = pair_operator(mdp, spec)
    _check_bound(contraction_bound(operator, mdp.pair_discount), "Value iteration")
    report = _fixed_point(
        lambda v: _state_minimum(mdp, mdp.pair_cost + mdp.pair_discount * operator(v)),
        mdp.n_states, mdp.discount, tol, max_iter, f"Value iteration ({spec.label})",
    )
    return report, greedy_policy(mdp, spec, report.value, operator)


def policy_iteration_exact(mdp: FiniteMdp, spec: RiskMappingSpec, tol: float = 1e-9,
                           initial: Optional[StationaryPolicy] = None,
                           max_rounds: int = 1000) -> Tuple[List[StationaryPolicy], SolveReport]:
    """Alternate exact evaluation and greedy improvement.

    An action is only replaced when another one is better by more than
    ``tol``, so the method stops as soon as the current policy is equally good.
    """
    operator = pair_operator(mdp, spec)
    policy = initial or StationaryPolicy.first_actions(mdp)
    policies = [policy]
    for round_ in range(1, max_rounds + 1):
        report = evaluate_policy_exact(mdp, policy, spec, tol)
        q = bellman_q_values(mdp, spec, report.value, operator)
        current = q[mdp.policy_pairs(policy)]
        best = _state_minimum(mdp, q)
        greedy = _greedy_from_q(mdp, q)
        keep = current <= best + tol
        improved = StationaryPolicy(np.where(keep, policy.actions, greedy.actions))
        if improved == policy:
            logger.info(f"Policy iteration stopped after {round_} evaluations")
            return policies, report
        policy = improved
        policies.append(policy)
    raise NoContraction(max_rounds, float(np.abs(current - best).max()))


def write_report(report: SolveReport, path: str | Path) -> Path:
    """Final values, residual history and contraction estimate as JSON"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    except OSError as e:
        raise surface_io_error(path, e) from e
    return path
