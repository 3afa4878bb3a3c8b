"""
Unit tests for navigation features and the polynomial expansion
"""

import numpy as np
import pytest

from core.schemas import NavParams
from nav.env import NavConfig, NavState, NavWorld
from core.config import settings
from nav import features
from nav.features import N_POLYNOMIAL, expand_polynomial, extract_features, model_value, nav_features
from nav.grid import GridMap, shortest_distances

SIZE = 6


def square_symmetries(n):
    top = n - 1
    return [
        lambda c: c,
        lambda c: (top - c[0], c[1]),
        lambda c: (c[0], top - c[1]),
        lambda c: (top - c[0], top - c[1]),
        lambda c: (c[1], c[0]),
        lambda c: (top - c[1], c[0]),
        lambda c: (c[1], top - c[0]),
        lambda c: (top - c[1], top - c[0]),
    ]


def mapped_world(world, mapping):
    grid = world.grid.transformed(mapping, world.grid.width, world.grid.height)
    config = NavConfig(tuple(mapping(c) for c in world.config.waypoints),
                       tuple(mapping(c) for c in world.config.transmission_points))
    return NavWorld(grid, config, world.params)


class TestExtractFeatures:
    def test_open_grid_example(self, open_grid):
        config = NavConfig(((0, 2), (4, 0)), ((4, 4),))
        f = extract_features(NavState((0, 0), 0b11, 3.0), config, shortest_distances(open_grid))
        assert f.tolist() == [2.0, 4.0, 0.0, 2.0, 4.0, 3.0]

    def test_terminal_state(self, tiny_world):
        f = extract_features(NavState((0, 0), 0, 0.0), tiny_world.config, tiny_world.dists)
        assert f.tolist() == [0.0] * 6

    def test_single_unvisited_waypoint(self, wall_world):
        f = extract_features(NavState((0, 0), 0b10, 0.0), wall_world.config, wall_world.dists)
        assert f[:3].tolist() == [1.0, 0.0, 0.0]
        assert f[3] == wall_world.dists.dist((0, 0), (5, 5))

    def test_no_unvisited_waypoints(self, wall_world):
        f = extract_features(NavState((0, 0), 0, 4.0), wall_world.config, wall_world.dists)
        assert f.tolist() == [0.0, 0.0, 0.0, 0.0, 5.0, 4.0]

    def test_spread_of_three_waypoints(self, open_grid):
        config = NavConfig(((0, 0), (2, 0), (4, 0)), ((4, 4),))
        f = extract_features(NavState((0, 4), 0b111, 0.0), config, shortest_distances(open_grid))
        pairs = np.array([2.0, 4.0, 2.0])
        assert f[1] == pytest.approx(pairs.mean())
        assert f[2] == pytest.approx(pairs.std())

    @pytest.mark.parametrize("k", range(8))
    def test_invariant_under_square_symmetries(self, k, wall_world):
        mapping = square_symmetries(SIZE)[k]
        image = mapped_world(wall_world, mapping)
        for cell in wall_world.grid.free_cells():
            for mask in range(4):
                state = NavState(cell, mask, 2.0)
                moved = NavState(mapping(cell), mask, 2.0)
                assert np.array_equal(
                    extract_features(state, wall_world.config, wall_world.dists),
                    extract_features(moved, image.config, image.dists),
                )

    def test_invariant_under_translation(self):
        grid = GridMap(8, 8)
        dists = shortest_distances(grid)
        config = NavConfig(((0, 3), (2, 0)), ((1, 1),))
        shifted = NavConfig(((3, 5), (5, 2)), ((4, 3),))
        for x in range(4):
            for y in range(4):
                a = extract_features(NavState((x, y), 0b11, 1.0), config, dists)
                b = extract_features(NavState((x + 3, y + 2), 0b11, 1.0), shifted, dists)
                assert np.array_equal(a, b)


class TestPolynomial:
    def test_dimension(self):
        assert N_POLYNOMIAL == 28
        assert expand_polynomial(np.arange(6.0), False).shape == (28,)

    def test_terminal_is_zero(self):
        assert not expand_polynomial(np.arange(1.0, 7.0), True).any()

    def test_unit_feature(self):
        expanded = expand_polynomial(np.array([1.0, 0, 0, 0, 0, 0]), False)
        assert expanded.sum() == 3.0
        assert expanded[0] == 1.0 and expanded[1] == 1.0 and expanded[7] == 1.0

    def test_products(self):
        f = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        expanded = expand_polynomial(f, False)
        assert expanded[1:7].tolist() == f.tolist()
        assert sorted(expanded[7:].tolist()) == sorted(f[i] * f[j] for i in range(6) for j in range(i, 6))


class TestNavFeatures:
    def test_cached_and_read_only(self, wall_world):
        state = NavState((0, 0), 3, 0.0)
        first = nav_features(wall_world, state)
        assert nav_features(wall_world, state) is first
        assert not first.flags.writeable

    def test_cache_is_bounded(self):
        info = features._cached_features.cache_info()
        assert info.maxsize == settings.feature_cache_size
        assert info.maxsize is not None and info.currsize <= info.maxsize

    def test_cache_is_per_world(self, wall_world):
        state = NavState((0, 0), 1, 0.0)
        moved = wall_world.with_config(NavConfig(((5, 5),), wall_world.config.transmission_points))
        assert not np.array_equal(nav_features(wall_world, state), nav_features(moved, state))

    def test_model_value_zero_at_terminal(self, tiny_world):
        theta = np.random.default_rng(0).normal(size=N_POLYNOMIAL)
        assert model_value(tiny_world, NavState((0, 0), 0, 0.0), theta) == 0.0
        assert model_value(tiny_world, NavState((1, 1), 1, 0.0), np.eye(N_POLYNOMIAL)[0]) == 1.0

    def test_params_do_not_enter_features(self, wall_world):
        other = NavWorld(wall_world.grid, wall_world.config, NavParams(observation_radius=3, discount=0.5))
        state = NavState((3, 3), 1, 2.0)
        assert np.array_equal(nav_features(wall_world, state), nav_features(other, state))
