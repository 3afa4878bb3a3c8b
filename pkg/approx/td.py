"""
Risk-averse temporal-difference learning for linear value models.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from core.logging import logger
from core.monitoring import metrics
from core.resilience import DimensionMismatch, require
from core.rng import stream
from core.schemas import RiskMappingSpec
from mdp.model import FiniteMdp, StationaryPolicy, restarted_trajectory
from risk.mappings import empirical_risk


@dataclass(frozen=True)
class HarmonicSchedule:
    """Stepsizes a / (b + t)"""

    a: float = 1.0
    b: float = 10.0

    def __post_init__(self):
        require(self.a > 0.0, "a", self.a, "must be > 0")
        require(self.b > 0.0, "b", self.b, "must be > 0")

    def __call__(self, t: int) -> float:
        return self.a / (self.b + t)


@dataclass(frozen=True)
class TdState:
    weights: np.ndarray
    schedule: HarmonicSchedule = field(default_factory=HarmonicSchedule)
    steps: int = 0


def td_step(state: TdState, phi: np.ndarray, cost: float, sigma_tilde: float,
            discount: float, t: Optional[int] = None) -> TdState:
    """theta' = theta - gamma_t * phi * (<phi, theta> - cost - discount * sigma~)"""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != state.weights.shape:
        raise DimensionMismatch("phi", state.weights.size, int(phi.size))
    t = state.steps if t is None else t
    difference = float(phi @ state.weights) - cost - discount * sigma_tilde
    weights = state.weights - state.schedule(t) * difference * phi
    return replace(state, weights=weights, steps=state.steps + 1)


def run_td(mdp: FiniteMdp, policy: StationaryPolicy, spec: RiskMappingSpec,
           features: np.ndarray, n_steps: int, seed: int = 0,
           schedule: Optional[HarmonicSchedule] = None) -> TdState:
    """TD(0) along one trajectory of the restarted process.

    Terminal visits only trigger the restart and are not updated.
    """
    features = np.asarray(features, dtype=float)
    if features.shape[0] != mdp.n_states:
        raise DimensionMismatch("features", mdp.n_states, features.shape[0])
    state = TdState(weights=np.zeros(features.shape[1]), schedule=schedule or HarmonicSchedule())
    rng = stream(seed, "td")
    for step in restarted_trajectory(mdp, policy, spec, rng, n_steps):
        if step.action < 0:
            continue
        successor_values = features[list(step.successors)] @ state.weights
        sigma_tilde = float(empirical_risk(spec, successor_values[None, :])[0])
        state = td_step(state, features[step.state], step.cost, sigma_tilde, step.discount)
    metrics.increment("td_steps", state.steps)
    logger.info(f"TD finished after {state.steps} updates")
    return state
