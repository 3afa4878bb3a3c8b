"""
Exact enumeration of a single navigation instance as a FiniteMdp.

Information levels are the sums reachable from 0 by adding I_high or I_low at
most |W| times, so the enumeration needs no rounding.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from core.config import exact_state_cap
from core.logging import logger
from core.resilience import StateSpaceTooLarge
from core.schemas import RiskMappingSpec
from mdp.model import FiniteMdp, StationaryPolicy
from mdp.solver import SolveReport, evaluate_policy_exact, value_iteration_optimal
from nav.env import NavState, NavWorld, feasible_actions, stage_cost, transition_outcomes
from nav.policy import NavPolicy


@dataclass
class NavMdp:
    world: NavWorld
    mdp: FiniteMdp
    states: List[NavState]
    index: Dict[NavState, int]
    start_states: List[int]


@dataclass
class ExactBaseline:
    nav: NavMdp
    report: SolveReport
    policy: StationaryPolicy
    restart_value: float


def estimated_state_count(world: NavWorld) -> int:
    """Upper bound: free cells x visited masks x information levels"""
    n = world.n_waypoints
    levels = (n + 1) * (n + 2) // 2
    return len(world.grid.free_cells()) * (2 ** n) * levels


def build_nav_mdp(world: NavWorld, cap: Optional[int] = None) -> NavMdp:
    """Breadth-first enumeration of the states reachable from the start states"""
    cap = cap or exact_state_cap()
    estimate = estimated_state_count(world)
    if estimate > cap:
        raise StateSpaceTooLarge(estimate, cap)

    starts = [NavState(cell, world.config.full_mask, 0.0) for cell in world.grid.free_cells()]
    index: Dict[NavState, int] = {s: i for i, s in enumerate(starts)}
    states: List[NavState] = list(starts)
    queue = deque(starts)
    transitions, costs, discounts, terminal = [], [], [], []
    n_waypoints = world.n_waypoints
    while queue:
        state = queue.popleft()
        i = index[state]
        if world.is_terminal(state):
            terminal.append(i)
        for action in feasible_actions(world, state):
            u = action.action_id(n_waypoints)
            cost, discount = stage_cost(world, state, action)
            costs.append((i, u, cost))
            discounts.append((i, u, discount))
            for outcome in transition_outcomes(world, state, action):
                if outcome.state not in index:
                    index[outcome.state] = len(states)
                    states.append(outcome.state)
                    queue.append(outcome.state)
                transitions.append((i, u, index[outcome.state], outcome.probability))

    restart = np.zeros(len(states))
    restart[: len(starts)] = 1.0
    mdp = FiniteMdp.from_triplets(
        n_states=len(states),
        transitions=transitions,
        costs=costs,
        discount=world.params.discount,
        terminal_states=terminal,
        restart=restart,
        action_discounts=discounts,
    )
    logger.info(f"Enumerated {len(states)} navigation states ({mdp.n_pairs} pairs, bound {estimate})")
    return NavMdp(world, mdp, states, index, list(range(len(starts))))


def policy_from_nav(nav: NavMdp, policy: NavPolicy) -> StationaryPolicy:
    """Tabular version of a structured navigation policy"""
    n_waypoints = nav.world.n_waypoints
    return StationaryPolicy(np.array([policy(s, nav.world).action_id(n_waypoints) for s in nav.states]))


def restart_value(nav: NavMdp, values: np.ndarray) -> float:
    """Value averaged over the start states"""
    return float(nav.mdp.restart.probabilities @ values)


def exact_baseline(world: NavWorld, spec: RiskMappingSpec, tol: float = 1e-8,
                   nav: Optional[NavMdp] = None) -> ExactBaseline:
    """Optimal values and policy of one instance"""
    nav = nav or build_nav_mdp(world)
    report, policy = value_iteration_optimal(nav.mdp, spec, tol)
    return ExactBaseline(nav, report, policy, restart_value(nav, report.value))


def policy_exact_value(nav: NavMdp, policy: NavPolicy, spec: RiskMappingSpec,
                       tol: float = 1e-8) -> float:
    """Exact restart value of a structured policy"""
    report = evaluate_policy_exact(nav.mdp, policy_from_nav(nav, policy), spec, tol)
    return restart_value(nav, report.value)
