from __future__ import annotations

from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.config import settings
from core.resilience import require

RiskBase = Literal["expectation", "mean_semideviation", "avar", "worst_case"]


class RiskMappingSpec(BaseModel):
    """Transition risk mapping: base measure, mini-batch size and mixture weight.

    ``batch_size == 1`` applies the base mapping to the transition distribution
    directly. For ``batch_size > 1`` the base is applied to the empirical
    measure of N i.i.d. successors and averaged over the draws. The result is
    blended with the plain expectation: ``(1 - c) E + c sigma``.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    base: RiskBase = "expectation"
    batch_size: int = 1
    mixture_weight: float = 1.0
    coefficient: Optional[float] = None  # mean-semideviation weight c
    level: Optional[float] = None  # AVaR level

    @model_validator(mode="after")
    def _check_ranges(self) -> "RiskMappingSpec":
        require(self.batch_size >= 1, "batch_size", self.batch_size, "must be >= 1")
        require(0.0 <= self.mixture_weight <= 1.0, "mixture_weight", self.mixture_weight,
                "must lie in [0, 1]")
        if self.base == "mean_semideviation":
            require(self.coefficient is not None, "coefficient", None,
                    "mean_semideviation needs a coefficient")
            require(0.0 <= self.coefficient <= 1.0, "coefficient", self.coefficient,
                    "must lie in [0, 1]")
        if self.base == "avar":
            require(self.level is not None, "level", None, "avar needs a level")
            require(0.0 < self.level <= 1.0, "level", self.level, "must lie in (0, 1]")
        return self

    @classmethod
    def expectation(cls) -> "RiskMappingSpec":
        return cls(base="expectation")

    @classmethod
    def worst_case(cls, batch_size: int = 1, mixture_weight: float = 1.0) -> "RiskMappingSpec":
        return cls(base="worst_case", batch_size=batch_size, mixture_weight=mixture_weight)

    @classmethod
    def mean_semideviation(cls, coefficient: float, batch_size: int = 1,
                           mixture_weight: float = 1.0) -> "RiskMappingSpec":
        return cls(base="mean_semideviation", coefficient=coefficient,
                   batch_size=batch_size, mixture_weight=mixture_weight)

    @classmethod
    def avar(cls, level: float, batch_size: int = 1, mixture_weight: float = 1.0) -> "RiskMappingSpec":
        return cls(base="avar", level=level, batch_size=batch_size, mixture_weight=mixture_weight)

    @classmethod
    def from_json(cls, text: str) -> "RiskMappingSpec":
        return cls.model_validate_json(text)

    def to_json(self) -> str:
        return self.model_dump_json(exclude_none=True)

    @property
    def label(self) -> str:
        parts = [self.base]
        if self.coefficient is not None:
            parts.append(f"c={self.coefficient:g}")
        if self.level is not None:
            parts.append(f"level={self.level:g}")
        parts.append(f"N={self.batch_size}")
        if self.mixture_weight != 1.0:
            parts.append(f"mix={self.mixture_weight:g}")
        return "[".join([parts[0], ",".join(parts[1:])]) + "]"


class NavParams(BaseModel):
    """Navigation environment constants (none of them is fixed by the model itself)"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    success_prob: float = Field(default=0.5, ge=0.0, le=1.0)
    info_high: float = Field(default=10.0, ge=0.0)
    info_low: float = Field(default=2.0, ge=0.0)
    observation_radius: int = Field(default=2, ge=0)
    observation_cost: float = Field(default=0.5, ge=0.0)
    move_cost: float = Field(default=1.0, ge=0.0)
    discount: float = Field(default=0.95, gt=0.0, lt=1.0)
    # Collect/Transmit are undiscounted unless this is set
    discount_all_actions: bool = False
    # Expected destruction loss per unit of carried information, charged on moves
    destruction_loss: float = Field(default=0.0, ge=0.0)
    lookahead_depth_cap: Optional[int] = Field(default=None, ge=1)

    def observation_cost_at(self, distance: float) -> float:
        return self.observation_cost * (1.0 + distance)


class GridSpec(BaseModel):
    """Grid area and the number of relevant points per configuration"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    width: int = Field(default=10, ge=1)
    height: int = Field(default=10, ge=1)
    obstacles: List[Tuple[int, int]] = Field(
        default_factory=lambda: [(3, 3), (3, 4), (3, 5), (6, 6), (6, 7), (7, 6)]
    )
    n_waypoints: int = Field(default=5, ge=1)
    n_transmission: int = Field(default=2, ge=1)


def default_gamma_grid() -> List[float]:
    return [round(0.25 * k, 2) for k in range(21)]


class ExperimentConfig(BaseModel):
    """Batch experiment: hyperspace training, improvement and comparison"""

    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default=0, ge=0)
    configs: int = Field(default=50, ge=1)  # J
    episodes: int = Field(default=80, ge=1)  # M per configuration
    outer_iters: int = Field(default=10, ge=1)  # L
    max_steps: Optional[int] = Field(default=None, ge=1)
    lambda_reg: Optional[float] = Field(default=None, gt=0.0)
    spec: RiskMappingSpec = Field(default_factory=lambda: RiskMappingSpec.worst_case(2))
    risk_neutral_spec: RiskMappingSpec = Field(default_factory=RiskMappingSpec.expectation)
    risk_averse_spec: RiskMappingSpec = Field(default_factory=lambda: RiskMappingSpec.worst_case(2))
    grid: GridSpec = Field(default_factory=GridSpec)
    params: NavParams = Field(default_factory=NavParams)
    gammas: List[float] = Field(default_factory=default_gamma_grid, min_length=1)
    initial_gamma: float = Field(default=1.0, ge=0.0)
    test_set_size: int = Field(default=50, ge=1)
    fresh_configs: int = Field(default=10, ge=1)
    eval_episodes: int = Field(default=1000, ge=1)
    trajectory_episodes: int = Field(default=3, ge=0)
    exact_baseline: bool = True
    output_dir: str = settings.output_dir

    @model_validator(mode="after")
    def _check_gammas(self) -> "ExperimentConfig":
        require(all(g >= 0.0 for g in self.gammas), "gammas", self.gammas, "must be >= 0")
        return self


class PolicyStats(BaseModel):
    """Performance of one policy on one configuration"""

    config_id: int
    policy: str
    mean_cost: float
    upper_semideviation: float
    episodes: int

    @classmethod
    def from_totals(cls, config_id: int, policy: str, totals: Sequence[float]) -> "PolicyStats":
        values = np.asarray(totals, dtype=float)
        mean = float(values.mean()) if values.size else 0.0
        semideviation = float(np.maximum(values - mean, 0.0).mean()) if values.size else 0.0
        return cls(config_id=config_id, policy=policy, mean_cost=mean,
                   upper_semideviation=semideviation, episodes=int(values.size))

    @property
    def risk_adjusted(self) -> float:
        return self.mean_cost + self.upper_semideviation
