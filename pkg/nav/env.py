"""
Underwater robot navigation: states, actions and the transition law.

The robot moves on a grid, collects information at waypoints (high value with
probability ``success_prob``) and earns the carried information back when it
transmits from a transmission point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple

from core.resilience import InfeasibleAction, InvalidInstance
from core.rng import RandomStream
from core.schemas import GridSpec, NavParams
from core.validation import InstanceFile
from nav.grid import DIRECTION_NAMES, DIRECTIONS, Cell, DistanceField, GridMap, shortest_distances

ActionKind = Literal["move", "collect", "transmit", "terminate"]


@dataclass(frozen=True)
class NavConfig:
    """Placement of waypoints and transmission points"""

    waypoints: Tuple[Cell, ...]
    transmission_points: Tuple[Cell, ...]

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple((int(x), int(y)) for x, y in self.waypoints))
        object.__setattr__(self, "transmission_points",
                           tuple((int(x), int(y)) for x, y in self.transmission_points))
        if not self.waypoints or not self.transmission_points:
            raise InvalidInstance("need at least one waypoint and one transmission point")
        if len(set(self.waypoints)) != len(self.waypoints):
            raise InvalidInstance("waypoints must be pairwise distinct")

    @property
    def full_mask(self) -> int:
        return (1 << len(self.waypoints)) - 1

    def check(self, grid: GridMap) -> None:
        for cell in (*self.waypoints, *self.transmission_points):
            if not grid.is_free(cell):
                raise InvalidInstance(f"relevant point {cell} is not a free cell")


@dataclass(frozen=True)
class NavState:
    robot: Cell
    unvisited: int
    info: float = 0.0

    def unvisited_indices(self, n_waypoints: int) -> List[int]:
        return [w for w in range(n_waypoints) if self.unvisited >> w & 1]


@dataclass(frozen=True)
class NavAction:
    kind: ActionKind
    index: int = 0

    @classmethod
    def move(cls, direction: int) -> "NavAction":
        return cls("move", direction)

    @classmethod
    def collect(cls, waypoint: int) -> "NavAction":
        return cls("collect", waypoint)

    def action_id(self, n_waypoints: int) -> int:
        """Moves 0-7, Collect 8+w, Transmit 8+|W|, Terminate 9+|W|"""
        if self.kind == "move":
            return self.index
        if self.kind == "collect":
            return len(DIRECTIONS) + self.index
        if self.kind == "transmit":
            return len(DIRECTIONS) + n_waypoints
        return len(DIRECTIONS) + n_waypoints + 1

    @property
    def label(self) -> str:
        if self.kind == "move":
            return f"move_{DIRECTION_NAMES[self.index]}"
        if self.kind == "collect":
            return f"collect_{self.index}"
        return self.kind


TRANSMIT = NavAction("transmit")
TERMINATE = NavAction("terminate")


@dataclass(frozen=True)
class Outcome:
    probability: float
    state: NavState


@dataclass(eq=False)
class NavWorld:
    """Grid, configuration, parameters and the precomputed distances"""

    grid: GridMap
    config: NavConfig
    params: NavParams = field(default_factory=NavParams)
    dists: Optional[DistanceField] = None

    def __post_init__(self):
        self.config.check(self.grid)
        if self.dists is None:
            self.dists = shortest_distances(self.grid)

    @property
    def n_waypoints(self) -> int:
        return len(self.config.waypoints)

    def is_terminal(self, state: NavState) -> bool:
        return (state.robot in self.config.transmission_points
                and state.unvisited == 0 and state.info == 0.0)

    def with_config(self, config: NavConfig) -> "NavWorld":
        """Same grid and distances, different relevant points"""
        return NavWorld(self.grid, config, self.params, self.dists)


def feasible_actions(world: NavWorld, state: NavState) -> List[NavAction]:
    """Feasible actions in action-id order"""
    if world.is_terminal(state):
        return [TERMINATE]
    actions = [NavAction.move(d) for d, _ in world.grid.neighbors(state.robot)]
    radius = world.params.observation_radius
    for w in state.unvisited_indices(world.n_waypoints):
        if world.dists.dist(state.robot, world.config.waypoints[w]) <= radius:
            actions.append(NavAction.collect(w))
    if state.robot in world.config.transmission_points and state.info > 0.0:
        actions.append(TRANSMIT)
    return actions


def is_feasible(world: NavWorld, state: NavState, action: NavAction) -> bool:
    return action in feasible_actions(world, state)


def stage_cost(world: NavWorld, state: NavState, action: NavAction) -> Tuple[float, float]:
    """(cost, discount) of taking ``action`` in ``state``"""
    p = world.params
    instant = 1.0 if not p.discount_all_actions else p.discount
    if action.kind == "move":
        return p.move_cost + p.destruction_loss * state.info, p.discount
    if action.kind == "collect":
        d = world.dists.dist(state.robot, world.config.waypoints[action.index])
        return p.observation_cost_at(d), instant
    if action.kind == "transmit":
        return -state.info, instant
    return 0.0, p.discount


def transition_outcomes(world: NavWorld, state: NavState, action: NavAction) -> List[Outcome]:
    """Successor distribution of a feasible action (at most two outcomes)"""
    if not is_feasible(world, state, action):
        raise InfeasibleAction(state, action)
    if action.kind == "move":
        return [Outcome(1.0, NavState(world.grid.step(state.robot, action.index),
                                      state.unvisited, state.info))]
    if action.kind == "collect":
        p = world.params
        mask = state.unvisited & ~(1 << action.index)
        high = NavState(state.robot, mask, state.info + p.info_high)
        low = NavState(state.robot, mask, state.info + p.info_low)
        if high == low or p.success_prob == 1.0:
            return [Outcome(1.0, high)]
        if p.success_prob == 0.0:
            return [Outcome(1.0, low)]
        return [Outcome(p.success_prob, high), Outcome(1.0 - p.success_prob, low)]
    if action.kind == "transmit":
        return [Outcome(1.0, NavState(state.robot, state.unvisited, 0.0))]
    return [Outcome(1.0, state)]


def nav_transition(world: NavWorld, state: NavState, action: NavAction,
                   rng: RandomStream) -> Tuple[NavState, float, float]:
    """Sample (next state, stage cost, effective discount)"""
    outcomes = transition_outcomes(world, state, action)
    cost, discount = stage_cost(world, state, action)
    if len(outcomes) == 1:
        return outcomes[0].state, cost, discount
    pick = 0 if rng.random() < outcomes[0].probability else 1
    return outcomes[pick].state, cost, discount


def sample_outcomes(outcomes: Sequence[Outcome], n: int, rng: RandomStream) -> List[NavState]:
    """n i.i.d. successors from an outcome list"""
    if len(outcomes) == 1:
        return [outcomes[0].state] * n
    draws = rng.random(n) < outcomes[0].probability
    return [outcomes[0].state if hit else outcomes[1].state for hit in draws]


def sample_configuration(grid: GridMap, spec: GridSpec, rng: RandomStream) -> NavConfig:
    """Distinct free cells for the waypoints, then for the transmission points"""
    free = grid.free_cells()
    needed = spec.n_waypoints + spec.n_transmission
    if needed > len(free):
        raise InvalidInstance(f"{needed} relevant points do not fit in {len(free)} free cells")
    picks = rng.choice(len(free), size=needed, replace=False)
    cells = [free[i] for i in picks]
    return NavConfig(tuple(cells[:spec.n_waypoints]), tuple(cells[spec.n_waypoints:]))


def sample_start_state(world: NavWorld, rng: RandomStream,
                       unvisited_count: Optional[int] = None) -> NavState:
    """Robot uniform over free cells, a uniform mask with the given count, I = 0"""
    free = world.grid.free_cells()
    robot = free[int(rng.integers(len(free)))]
    n = world.n_waypoints
    count = n if unvisited_count is None else unvisited_count
    chosen = rng.choice(n, size=count, replace=False) if count else []
    mask = 0
    for w in chosen:
        mask |= 1 << int(w)
    return NavState(robot, mask, 0.0)


def grid_from_spec(spec: GridSpec) -> GridMap:
    grid = GridMap(spec.width, spec.height, frozenset(spec.obstacles))
    if not grid.is_connected():
        raise InvalidInstance("free cells of the grid are not connected")
    return grid


def world_from_instance(instance: InstanceFile) -> NavWorld:
    grid = GridMap(instance.width, instance.height, frozenset(instance.obstacles))
    if not grid.is_connected():
        raise InvalidInstance("free cells of the grid are not connected")
    config = NavConfig(tuple(instance.waypoints), tuple(instance.transmission_points))
    return NavWorld(grid, config, instance.params)


def episode_cap(world: NavWorld) -> int:
    """Step cap 4 x diameter x (|W| + |T|) for rollouts and lookahead paths"""
    relevant = len(world.config.waypoints) + len(world.config.transmission_points)
    return 4 * max(world.dists.diameter(), 1) * relevant
