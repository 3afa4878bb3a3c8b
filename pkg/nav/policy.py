"""
Structured navigation policies and the lookahead improvement operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from core.logging import logger
from core.resilience import DistanceUnavailable, NoTargetReachable, require
from core.rng import RandomStream, stream
from core.schemas import RiskMappingSpec
from nav.env import (
    TERMINATE,
    TRANSMIT,
    NavAction,
    NavState,
    NavWorld,
    episode_cap,
    feasible_actions,
    sample_outcomes,
    stage_cost,
    transition_outcomes,
)
from nav.features import nav_features
from nav.grid import UNREACHABLE, Cell
from risk.mappings import empirical_risk

NavPolicy = Callable[[NavState, NavWorld], NavAction]
SCORE_TOL = 1e-12


def _nearest(world: NavWorld, robot: Cell, cells: Sequence[Tuple[int, Cell]]) -> Tuple[int, float]:
    """(index, distance) of the closest reachable cell, lowest index on ties"""
    best, best_d = -1, UNREACHABLE
    for index, cell in cells:
        d = world.dists.dist(robot, cell)
        if d < best_d:
            best, best_d = index, d
    if best < 0:
        raise NoTargetReachable(robot)
    return best, best_d


def _head_to_transmission(world: NavWorld, state: NavState) -> NavAction:
    t, d = _nearest(world, state.robot, list(enumerate(world.config.transmission_points)))
    if d == 0.0:
        return TRANSMIT
    return NavAction.move(world.dists.first_step(state.robot, world.config.transmission_points[t]))


def _head_to_waypoint(world: NavWorld, state: NavState, w: int, d: float) -> NavAction:
    if d <= world.params.observation_radius:
        return NavAction.collect(w)
    return NavAction.move(world.dists.first_step(state.robot, world.config.waypoints[w]))


def _open_waypoints(world: NavWorld, state: NavState) -> List[Tuple[int, Cell]]:
    return [(w, world.config.waypoints[w]) for w in state.unvisited_indices(world.n_waypoints)]


def threshold_policy_action(gamma: float, state: NavState, world: NavWorld) -> NavAction:
    """Transmit branch when I > 0 and min_dW >= gamma * min_dT / I, else nearest waypoint"""
    if world.is_terminal(state):
        return TERMINATE
    if state.unvisited == 0:
        return _head_to_transmission(world, state)
    w, min_dw = _nearest(world, state.robot, _open_waypoints(world, state))
    if state.info > 0.0:
        _, min_dt = _nearest(world, state.robot, list(enumerate(world.config.transmission_points)))
        if min_dw >= gamma * min_dt / state.info:
            return _head_to_transmission(world, state)
    return _head_to_waypoint(world, state, w, min_dw)


def nearest_relevant_action(state: NavState, world: NavWorld) -> NavAction:
    """Go to whichever relevant point is closer (transmission only while carrying information)"""
    if world.is_terminal(state):
        return TERMINATE
    if state.unvisited == 0:
        return _head_to_transmission(world, state)
    w, min_dw = _nearest(world, state.robot, _open_waypoints(world, state))
    if state.info > 0.0:
        _, min_dt = _nearest(world, state.robot, list(enumerate(world.config.transmission_points)))
        if min_dt < min_dw:
            return _head_to_transmission(world, state)
    return _head_to_waypoint(world, state, w, min_dw)


@dataclass(frozen=True)
class ThresholdPolicy:
    gamma: float
    name: str = "threshold"

    def __call__(self, state: NavState, world: NavWorld) -> NavAction:
        return threshold_policy_action(self.gamma, state, world)


@dataclass(frozen=True)
class NearestRelevantPolicy:
    name: str = "nearest_relevant"

    def __call__(self, state: NavState, world: NavWorld) -> NavAction:
        return nearest_relevant_action(state, world)


def _sampled_risk(world: NavWorld, state: NavState, action: NavAction, theta: np.ndarray,
                  spec: RiskMappingSpec, rng: RandomStream) -> float:
    """sigma~ of the model values at N sampled successors"""
    draws = sample_outcomes(transition_outcomes(world, state, action), spec.batch_size, rng)
    values = np.array([nav_features(world, s) @ theta for s in draws])
    return float(empirical_risk(spec, values[None, :])[0])


def _risk_of_action(world: NavWorld, state: NavState, action: NavAction, theta: np.ndarray,
                    spec: RiskMappingSpec, rng: RandomStream) -> float:
    """c(s, a) + alpha(a) * sigma~ over N sampled successors"""
    cost, discount = stage_cost(world, state, action)
    if action.kind == "terminate":
        return cost
    return cost + discount * _sampled_risk(world, state, action, theta, spec, rng)


def one_step_lookahead_policy(theta: np.ndarray, spec: RiskMappingSpec, state: NavState,
                              world: NavWorld, rng: RandomStream) -> NavAction:
    """Greedy action for the sampled one-step lookahead; lowest action id on ties"""
    best_action, best_score = None, np.inf
    for action in feasible_actions(world, state):
        score = _risk_of_action(world, state, action, theta, spec, rng)
        if score < best_score - SCORE_TOL:
            best_action, best_score = action, score
    return best_action


def lookahead_value(gamma: float, state: NavState, theta: np.ndarray, spec: RiskMappingSpec,
                    world: NavWorld, rng: RandomStream, depth_cap: Optional[int] = None) -> float:
    """Discounted move costs along the threshold policy's path up to its next
    Collect or Transmit, closed by the sampled risk of the model values after it.

    Paths longer than the depth cap are closed with the model value.
    """
    cap = depth_cap or world.params.lookahead_depth_cap or episode_cap(world)
    total, factor = 0.0, 1.0
    current = state
    for _ in range(cap):
        if world.is_terminal(current):
            return total
        action = threshold_policy_action(gamma, current, world)
        if action.kind != "move":
            return total + factor * _sampled_risk(world, current, action, theta, spec, rng)
        cost, discount = stage_cost(world, current, action)
        total += factor * cost
        factor *= discount
        current = transition_outcomes(world, current, action)[0].state
    logger.warning(f"Lookahead from {state} hit the depth cap {cap}, closing with the model value")
    return total + factor * float(nav_features(world, current) @ theta)


def one_step_value(gamma: float, state: NavState, theta: np.ndarray, spec: RiskMappingSpec,
                   world: NavWorld, rng: RandomStream) -> float:
    """One-step lookahead score of the threshold policy's immediate action"""
    if world.is_terminal(state):
        return 0.0
    return _risk_of_action(world, state, threshold_policy_action(gamma, state, world),
                           theta, spec, rng)


@dataclass
class GammaChoice:
    gamma: float
    scores: Dict[float, float] = field(default_factory=dict)


def improve_gamma(theta: np.ndarray, spec: RiskMappingSpec, world: NavWorld,
                  gammas: Sequence[float], test_states: Sequence[NavState], seed: int = 0,
                  depth: Literal["variable", "one_step"] = "variable") -> GammaChoice:
    """Threshold minimising the test-set average of the lookahead value.

    Every test state owns one random stream that is replayed for each gamma,
    so all candidates see the same successor samples. Ties go to the smaller gamma.
    """
    require(len(gammas) > 0, "gammas", list(gammas), "must not be empty")
    evaluate = lookahead_value if depth == "variable" else one_step_value
    scores: Dict[float, float] = {}
    for gamma in sorted(gammas):
        values = []
        for k, state in enumerate(test_states):
            try:
                values.append(evaluate(gamma, state, theta, spec, world, stream(seed, "lookahead", k)))
            except (DistanceUnavailable, NoTargetReachable):
                values.append(np.inf)
        scores[gamma] = float(np.mean(values)) if values else 0.0
    lowest = min(scores.values())
    best = next(g for g in sorted(scores) if scores[g] <= lowest + SCORE_TOL)
    logger.debug(f"Chose gamma {best} (score {scores[best]:.4f}) over {len(scores)} candidates")
    return GammaChoice(gamma=best, scores=scores)
