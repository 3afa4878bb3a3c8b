"""
Navigation features and their second-order polynomial expansion.

Every feature is built from shortest-path lengths, so the vector does not
change under rotations, reflections or translations of the whole instance.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from core.config import settings
from nav.env import NavConfig, NavState, NavWorld
from nav.grid import DistanceField

N_FEATURES = 6
_UPPER = np.triu_indices(N_FEATURES)
N_POLYNOMIAL = 1 + N_FEATURES + _UPPER[0].size  # 28


def extract_features(state: NavState, config: NavConfig, dists: DistanceField) -> np.ndarray:
    """[unvisited count, mean and std of pairwise waypoint distances,
    nearest waypoint, nearest transmission point, information]"""
    if (state.robot in config.transmission_points and state.unvisited == 0
            and state.info == 0.0):
        return np.zeros(N_FEATURES)
    open_cells = [config.waypoints[w] for w in state.unvisited_indices(len(config.waypoints))]
    pairwise = np.array([
        dists.require(a, b) for i, a in enumerate(open_cells) for b in open_cells[i + 1:]
    ])
    mean_pair = float(pairwise.mean()) if pairwise.size else 0.0
    std_pair = float(pairwise.std()) if pairwise.size else 0.0
    nearest_w = min((dists.require(state.robot, c) for c in open_cells), default=0.0)
    nearest_t = min(dists.require(state.robot, c) for c in config.transmission_points)
    return np.array([len(open_cells), mean_pair, std_pair, nearest_w, nearest_t, state.info],
                    dtype=float)


def expand_polynomial(f: np.ndarray, is_terminal: bool) -> np.ndarray:
    """[non-terminal indicator, f, f_i * f_j for i <= j]; all zero when terminal"""
    if is_terminal:
        return np.zeros(N_POLYNOMIAL)
    f = np.asarray(f, dtype=float)
    products = np.outer(f, f)[_UPPER]
    return np.concatenate([[1.0], f, products])


def nav_features(world: NavWorld, state: NavState) -> np.ndarray:
    """Cached 28-dimensional model features of ``state``, read-only"""
    return _cached_features(world, state)


@lru_cache(maxsize=settings.feature_cache_size)
def _cached_features(world: NavWorld, state: NavState) -> np.ndarray:
    raw = extract_features(state, world.config, world.dists)
    features = expand_polynomial(raw, world.is_terminal(state))
    features.setflags(write=False)
    return features


def model_value(world: NavWorld, state: NavState, theta: np.ndarray) -> float:
    return float(nav_features(world, state) @ theta)
