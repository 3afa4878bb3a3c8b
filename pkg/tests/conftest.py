"""
Shared fixtures: small MDPs, navigation worlds and a quiet metrics collector.
"""

import numpy as np
import pytest

from core.monitoring import metrics
from core.schemas import NavParams
from mdp.model import FiniteMdp
from nav.env import NavConfig, NavWorld
from nav.grid import GridMap


@pytest.fixture(autouse=True)
def reset_metrics():
    metrics.reset()
    yield
    metrics.reset()


@pytest.fixture
def chain_mdp():
    """0 -> {1, 2} with probability 1/2 each, 1 -> 2, 2 terminal"""
    return FiniteMdp.from_triplets(
        n_states=3,
        transitions=[(0, 0, 1, 0.5), (0, 0, 2, 0.5), (1, 0, 2, 1.0)],
        costs=[(0, 0, 1.0), (1, 0, 4.0)],
        discount=0.9,
        terminal_states=[2],
    )


@pytest.fixture
def choice_mdp():
    """Two actions in state 0: a safe cost-2 exit and a gamble through state 1"""
    return FiniteMdp.from_triplets(
        n_states=3,
        transitions=[
            (0, 0, 2, 1.0),
            (0, 1, 1, 0.5), (0, 1, 2, 0.5),
            (1, 0, 2, 1.0),
        ],
        costs=[(0, 0, 2.0), (0, 1, 0.0), (1, 0, 3.0)],
        discount=0.9,
        terminal_states=[2],
    )


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int = 2,
               discount: float = 0.8, max_support: int = 3, cost_scale: float = 1.0) -> FiniteMdp:
    """Dense-ish random MDP without terminal states"""
    transitions, costs = [], []
    for i in range(n_states):
        for u in range(n_actions):
            k = int(rng.integers(1, max_support + 1))
            targets = rng.choice(n_states, size=min(k, n_states), replace=False)
            probs = rng.dirichlet(np.ones(targets.size))
            probs = probs / probs.sum()
            transitions.extend((i, u, int(j), float(p)) for j, p in zip(targets, probs))
            costs.append((i, u, float(cost_scale * rng.uniform(-1.0, 1.0))))
    return FiniteMdp.from_triplets(n_states, transitions, costs, discount)


@pytest.fixture
def make_random_mdp():
    return random_mdp


def five_state_instance() -> FiniteMdp:
    """Five transient states feeding a terminal state, small costs, alpha = 0.5"""
    transitions = [
        (0, 0, 1, 0.6), (0, 0, 2, 0.3), (0, 0, 5, 0.1),
        (1, 0, 2, 0.5), (1, 0, 3, 0.4), (1, 0, 5, 0.1),
        (2, 0, 3, 0.7), (2, 0, 0, 0.2), (2, 0, 5, 0.1),
        (3, 0, 4, 0.6), (3, 0, 1, 0.3), (3, 0, 5, 0.1),
        (4, 0, 0, 0.5), (4, 0, 2, 0.4), (4, 0, 5, 0.1),
    ]
    costs = [(0, 0, 0.1), (1, 0, 0.3), (2, 0, 0.0), (3, 0, 0.2), (4, 0, 0.25)]
    return FiniteMdp.from_triplets(6, transitions, costs, discount=0.5, terminal_states=[5])


@pytest.fixture
def five_state_mdp():
    return five_state_instance()


@pytest.fixture
def open_grid():
    return GridMap(5, 5)


@pytest.fixture
def tiny_world():
    """3x3 open grid, one waypoint at (2, 2), transmission point at (0, 0)"""
    params = NavParams(observation_radius=1, discount=0.95)
    return NavWorld(GridMap(3, 3), NavConfig(((2, 2),), ((0, 0),)), params)


@pytest.fixture
def wall_world():
    """6x6 grid with a wall segment, two waypoints and one transmission point"""
    grid = GridMap(6, 6, frozenset({(2, 1), (2, 2), (2, 3)}))
    config = NavConfig(((0, 5), (5, 5)), ((5, 0),))
    return NavWorld(grid, config, NavParams(observation_radius=1))
