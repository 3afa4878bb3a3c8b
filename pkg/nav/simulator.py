"""
Navigation rollouts, pooled training episodes and policy statistics.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from approx.least_squares import TransitionBatch
from core.config import worker_count
from core.monitoring import metrics
from core.rng import RandomStream, stream
from core.schemas import PolicyStats, RiskMappingSpec
from nav.env import (
    NavAction,
    NavState,
    NavWorld,
    episode_cap,
    sample_outcomes,
    sample_start_state,
    stage_cost,
    transition_outcomes,
)
from nav.features import N_POLYNOMIAL, nav_features
from nav.policy import NavPolicy


@dataclass(frozen=True)
class NavStep:
    state: NavState
    action: NavAction
    cost: float
    discount: float
    successors: tuple
    next_state: NavState


@dataclass
class NavEpisode:
    start_state: NavState
    steps: List[NavStep] = field(default_factory=list)
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.steps)


def episode_total_cost(episode: NavEpisode) -> float:
    """Discounted total cost, each stage weighted by the product of earlier discounts"""
    total, factor = 0.0, 1.0
    for step in episode.steps:
        total += factor * step.cost
        factor *= step.discount
    return total


def rollout(world: NavWorld, policy: NavPolicy, rng: RandomStream, start: NavState,
            batch_size: int = 1, max_steps: Optional[int] = None) -> NavEpisode:
    """Simulate until a terminal state or the step cap.

    Each step draws ``batch_size`` successors and continues from one of them
    chosen uniformly.
    """
    cap = max_steps or episode_cap(world)
    episode = NavEpisode(start_state=start)
    state = start
    for _ in range(cap):
        if world.is_terminal(state):
            return episode
        action = policy(state, world)
        cost, discount = stage_cost(world, state, action)
        draws = sample_outcomes(transition_outcomes(world, state, action), batch_size, rng)
        chosen = draws[int(rng.integers(batch_size))] if batch_size > 1 else draws[0]
        episode.steps.append(NavStep(state, action, cost, discount, tuple(draws), chosen))
        state = chosen
    episode.truncated = not world.is_terminal(state)
    return episode


def sample_test_states(world: NavWorld, size: int, seed: int, key: int = 0) -> List[NavState]:
    """Test states sampled like episode starts, cycling the unvisited count"""
    n = world.n_waypoints
    return [
        sample_start_state(world, stream(seed, "test-state", key, k), n - (k % n))
        for k in range(size)
    ]


def _episode_batch(world: NavWorld, episodes: Sequence[NavEpisode], batch_size: int) -> TransitionBatch:
    steps = [s for e in episodes for s in e.steps]
    if not steps:
        return TransitionBatch.empty(N_POLYNOMIAL, batch_size)
    return TransitionBatch(
        phi=np.array([nav_features(world, s.state) for s in steps]),
        costs=np.array([s.cost for s in steps]),
        discounts=np.array([s.discount for s in steps]),
        successor_phi=np.array([[nav_features(world, n) for n in s.successors] for s in steps]),
    )


@dataclass
class NavEpisodeSource:
    """Episodes pooled over many configurations, one structured policy each.

    Episode m of a configuration starts with |W| - (m mod |W|) unvisited
    waypoints, robot uniform over the free cells and no information.
    """

    worlds: Sequence[NavWorld]
    policies: Sequence[NavPolicy]
    episodes: int = 80
    max_steps: Optional[int] = None
    threads: Optional[int] = None

    @property
    def dim(self) -> int:
        return N_POLYNOMIAL

    def _collect_one(self, j: int, spec: RiskMappingSpec, seed: int, iteration: int) -> TransitionBatch:
        world, policy = self.worlds[j], self.policies[j]
        n = world.n_waypoints
        episodes = []
        for m in range(self.episodes):
            rng = stream(seed, "nav-episode", iteration, j, m)
            start = sample_start_state(world, rng, n - (m % n))
            episodes.append(rollout(world, policy, rng, start, spec.batch_size, self.max_steps))
        metrics.increment("episodes", len(episodes))
        metrics.increment("steps", sum(len(e) for e in episodes))
        return _episode_batch(world, episodes, spec.batch_size)

    def collect(self, spec: RiskMappingSpec, seed: int, iteration: int) -> TransitionBatch:
        with ThreadPoolExecutor(max_workers=self.threads or worker_count()) as pool:
            batches = list(pool.map(lambda j: self._collect_one(j, spec, seed, iteration),
                                    range(len(self.worlds))))
        return TransitionBatch.concat(batches)


def evaluate_policy_stats(world: NavWorld, policy: NavPolicy, config_id: int, name: str,
                          episodes: int, seed: int) -> tuple[PolicyStats, List[NavEpisode]]:
    """Evaluation rollouts with common seeds: episode e uses the same stream for every policy"""
    runs = []
    for e in range(episodes):
        rng = stream(seed, "evaluation", config_id, e)
        start = sample_start_state(world, rng)
        runs.append(rollout(world, policy, rng, start))
    totals = [episode_total_cost(r) for r in runs]
    metrics.increment("evaluation_episodes", episodes)
    return PolicyStats.from_totals(config_id, name, totals), runs
