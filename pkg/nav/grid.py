"""
Grid area with obstacles and all-pairs shortest path lengths.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

from core.resilience import DistanceUnavailable, InvalidInstance

Cell = Tuple[int, int]

# N, NE, E, SE, S, SW, W, NW
DIRECTIONS: Tuple[Cell, ...] = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))
DIRECTION_NAMES = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")

UNREACHABLE = float("inf")


@dataclass(frozen=True)
class GridMap:
    """Rectangular grid; free cells connect through the 8 compass moves"""

    width: int
    height: int
    obstacles: FrozenSet[Cell] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidInstance(f"grid {self.width}x{self.height} must be at least 1x1")
        obstacles = frozenset((int(x), int(y)) for x, y in self.obstacles)
        for cell in obstacles:
            if not self.in_bounds(cell):
                raise InvalidInstance(f"obstacle {cell} outside the {self.width}x{self.height} grid")
        object.__setattr__(self, "obstacles", obstacles)

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.obstacles

    def index(self, cell: Cell) -> int:
        return cell[1] * self.width + cell[0]

    def cell(self, index: int) -> Cell:
        return index % self.width, index // self.width

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    def free_cells(self) -> List[Cell]:
        """Free cells in index order"""
        return [self.cell(i) for i in range(self.n_cells) if self.cell(i) not in self.obstacles]

    def step(self, cell: Cell, direction: int) -> Cell:
        dx, dy = DIRECTIONS[direction]
        return cell[0] + dx, cell[1] + dy

    def neighbors(self, cell: Cell) -> Iterable[Tuple[int, Cell]]:
        """(direction, target) for every legal move from ``cell``"""
        for d in range(len(DIRECTIONS)):
            target = self.step(cell, d)
            if self.is_free(target):
                yield d, target

    def is_connected(self) -> bool:
        free = self.free_cells()
        if not free:
            return False
        seen = {free[0]}
        queue = deque([free[0]])
        while queue:
            for _, nxt in self.neighbors(queue.popleft()):
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return len(seen) == len(free)

    def transformed(self, mapping: Callable[[Cell], Cell], width: int, height: int) -> "GridMap":
        """Image of the grid under a cell mapping onto a width x height area"""
        return GridMap(width, height, frozenset(mapping(c) for c in self.obstacles))


def _bfs(grid: GridMap, source: Cell) -> np.ndarray:
    dist = np.full(grid.n_cells, UNREACHABLE)
    dist[grid.index(source)] = 0.0
    queue = deque([source])
    while queue:
        cell = queue.popleft()
        here = dist[grid.index(cell)]
        for _, nxt in grid.neighbors(cell):
            k = grid.index(nxt)
            if dist[k] == UNREACHABLE:
                dist[k] = here + 1.0
                queue.append(nxt)
    return dist


@dataclass(frozen=True, eq=False)
class DistanceField:
    """All-pairs path lengths over cell indices; inf marks unreachable pairs"""

    grid: GridMap
    table: np.ndarray

    def dist(self, a: Cell, b: Cell) -> float:
        return float(self.table[self.grid.index(a), self.grid.index(b)])

    def require(self, a: Cell, b: Cell) -> float:
        d = self.dist(a, b)
        if d == UNREACHABLE:
            raise DistanceUnavailable(a, b)
        return d

    def diameter(self) -> int:
        finite = self.table[np.isfinite(self.table)]
        return int(finite.max()) if finite.size else 0

    def first_step(self, start: Cell, target: Cell) -> Optional[int]:
        """First direction, in compass order, that gets strictly closer to ``target``"""
        here = self.require(start, target)
        if here == 0.0:
            return None
        for d, nxt in self.grid.neighbors(start):
            if self.dist(nxt, target) < here:
                return d
        raise DistanceUnavailable(start, target)

    def path(self, start: Cell, target: Cell) -> List[Cell]:
        """Shortest path from start to target, both included"""
        cells = [start]
        while (d := self.first_step(cells[-1], target)) is not None:
            cells.append(self.grid.step(cells[-1], d))
        return cells


def shortest_distances(grid: GridMap) -> DistanceField:
    """Breadth-first search from every free cell"""
    table = np.full((grid.n_cells, grid.n_cells), UNREACHABLE)
    for cell in grid.free_cells():
        table[grid.index(cell)] = _bfs(grid, cell)
    table.setflags(write=False)
    return DistanceField(grid=grid, table=table)
