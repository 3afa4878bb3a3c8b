"""
Input file models and validation for riskgrid
"""

import json
from pathlib import Path
from typing import List, Optional, Tuple, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.logging import logger
from core.schemas import NavParams

Model = TypeVar("Model", bound=BaseModel)


class MdpFile(BaseModel):
    """Tabular MDP as stored on disk (sparse transition triplets)"""

    model_config = ConfigDict(extra="forbid")

    n_states: int = Field(..., ge=1)
    transitions: List[Tuple[int, int, int, float]] = Field(..., min_length=1)
    costs: List[Tuple[int, int, float]] = Field(default_factory=list)
    discount: float = Field(..., gt=0.0, lt=1.0)
    terminal_states: List[int] = Field(default_factory=list)
    restart: Optional[List[float]] = None
    action_discounts: List[Tuple[int, int, float]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_indices(self) -> "MdpFile":
        n = self.n_states
        for i, _u, j, p in self.transitions:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"transition ({i}, {j}) outside 0..{n - 1}")
            if p < 0:
                raise ValueError(f"negative transition probability {p}")
        for i in self.terminal_states:
            if not 0 <= i < n:
                raise ValueError(f"terminal state {i} outside 0..{n - 1}")
        if self.restart is not None:
            if len(self.restart) != n:
                raise ValueError(f"restart has {len(self.restart)} weights for {n} states")
            if min(self.restart) < 0 or sum(self.restart) <= 0:
                raise ValueError("restart weights must be non-negative with a positive sum")
        return self


class InstanceFile(BaseModel):
    """One navigation instance: grid, relevant points and parameter overrides"""

    model_config = ConfigDict(extra="forbid")

    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    obstacles: List[Tuple[int, int]] = Field(default_factory=list)
    waypoints: List[Tuple[int, int]] = Field(..., min_length=1)
    transmission_points: List[Tuple[int, int]] = Field(..., min_length=1)
    params: NavParams = Field(default_factory=NavParams)

    @field_validator("waypoints")
    @classmethod
    def _distinct_waypoints(cls, v):
        if len(set(v)) != len(v):
            raise ValueError("waypoints must be pairwise distinct")
        return v

    @model_validator(mode="after")
    def _check_cells(self) -> "InstanceFile":
        blocked = set(self.obstacles)
        for cell in [*self.waypoints, *self.transmission_points]:
            x, y = cell
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ValueError(f"cell {cell} outside the {self.width}x{self.height} grid")
            if cell in blocked:
                raise ValueError(f"cell {cell} is an obstacle")
        return self


def load_model(path: str | Path, model: Type[Model]) -> Model:
    """Read a JSON file into a validated model"""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        logger.error(f"Cannot read {path}: {e}")
        raise
    return model.model_validate(data)
