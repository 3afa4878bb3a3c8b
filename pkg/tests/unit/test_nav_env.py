"""
Unit tests for the navigation environment
"""

from pathlib import Path

import numpy as np
import pytest

from core.resilience import InfeasibleAction, InvalidInstance
from core.rng import stream
from core.schemas import GridSpec, NavParams
from core.validation import InstanceFile, load_model
from nav.env import (
    TERMINATE,
    TRANSMIT,
    NavAction,
    NavConfig,
    NavState,
    NavWorld,
    episode_cap,
    feasible_actions,
    grid_from_spec,
    nav_transition,
    sample_configuration,
    sample_outcomes,
    sample_start_state,
    stage_cost,
    transition_outcomes,
    world_from_instance,
)
from nav.grid import GridMap

DATA = Path(__file__).resolve().parents[2] / "data"


class TestActions:
    def test_action_ids(self):
        assert [NavAction.move(d).action_id(3) for d in range(8)] == list(range(8))
        assert NavAction.collect(2).action_id(3) == 10
        assert TRANSMIT.action_id(3) == 11
        assert TERMINATE.action_id(3) == 12

    def test_labels(self):
        assert NavAction.move(1).label == "move_NE"
        assert NavAction.collect(0).label == "collect_0"
        assert TRANSMIT.label == "transmit"

    def test_feasible_in_corner(self, tiny_world):
        state = NavState((0, 0), 1, 0.0)
        assert feasible_actions(tiny_world, state) == [NavAction.move(0), NavAction.move(1), NavAction.move(2)]

    def test_collect_within_radius(self, tiny_world):
        assert NavAction.collect(0) in feasible_actions(tiny_world, NavState((1, 1), 1, 0.0))
        assert NavAction.collect(0) not in feasible_actions(tiny_world, NavState((0, 1), 1, 0.0))
        assert NavAction.collect(0) not in feasible_actions(tiny_world, NavState((1, 1), 0, 3.0))

    def test_transmit_needs_information(self, tiny_world):
        assert TRANSMIT in feasible_actions(tiny_world, NavState((0, 0), 0, 2.0))
        assert TRANSMIT not in feasible_actions(tiny_world, NavState((0, 0), 1, 0.0))
        assert TRANSMIT not in feasible_actions(tiny_world, NavState((1, 0), 0, 2.0))

    def test_terminal_state(self, tiny_world):
        state = NavState((0, 0), 0, 0.0)
        assert tiny_world.is_terminal(state)
        assert feasible_actions(tiny_world, state) == [TERMINATE]
        assert stage_cost(tiny_world, state, TERMINATE) == (0.0, 0.95)
        assert transition_outcomes(tiny_world, state, TERMINATE)[0].state == state


class TestTransitions:
    def test_transmit_earns_information(self, tiny_world):
        state = NavState((0, 0), 0, 7.0)
        cost, discount = stage_cost(tiny_world, state, TRANSMIT)
        assert cost == -7.0 and discount == 1.0
        outcomes = transition_outcomes(tiny_world, state, TRANSMIT)
        assert [o.state for o in outcomes] == [NavState((0, 0), 0, 0.0)]

    def test_collect_at_waypoint(self, tiny_world):
        state = NavState((2, 2), 1, 0.0)
        assert stage_cost(tiny_world, state, NavAction.collect(0)) == (0.5, 1.0)
        outcomes = transition_outcomes(tiny_world, state, NavAction.collect(0))
        assert [(o.probability, o.state.info, o.state.unvisited) for o in outcomes] == [
            (0.5, 10.0, 0), (0.5, 2.0, 0)
        ]

    def test_collect_cost_grows_with_distance(self, tiny_world):
        assert stage_cost(tiny_world, NavState((1, 1), 1, 0.0), NavAction.collect(0))[0] == 1.0

    def test_high_value_frequency(self, tiny_world):
        state = NavState((2, 2), 1, 0.0)
        rng = stream(4, "collect")
        highs = sum(nav_transition(tiny_world, state, NavAction.collect(0), rng)[0].info == 10.0
                    for _ in range(20_000))
        assert highs / 20_000 == pytest.approx(0.5, abs=0.02)

    def test_move(self, tiny_world):
        state = NavState((0, 0), 1, 2.0)
        nxt, cost, discount = nav_transition(tiny_world, state, NavAction.move(1), stream(0))
        assert nxt == NavState((1, 1), 1, 2.0)
        assert (cost, discount) == (1.0, 0.95)

    def test_move_into_obstacle(self, wall_world):
        with pytest.raises(InfeasibleAction):
            transition_outcomes(wall_world, NavState((1, 2), 3, 0.0), NavAction.move(2))

    def test_move_off_grid(self, tiny_world):
        with pytest.raises(InfeasibleAction):
            transition_outcomes(tiny_world, NavState((0, 0), 1, 0.0), NavAction.move(4))

    def test_destruction_loss_on_moves(self):
        params = NavParams(observation_radius=1, destruction_loss=0.1)
        world = NavWorld(GridMap(3, 3), NavConfig(((2, 2),), ((0, 0),)), params)
        assert stage_cost(world, NavState((1, 1), 0, 5.0), NavAction.move(0))[0] == pytest.approx(1.5)

    def test_discount_all_actions(self):
        params = NavParams(observation_radius=1, discount_all_actions=True, discount=0.9)
        world = NavWorld(GridMap(3, 3), NavConfig(((2, 2),), ((0, 0),)), params)
        assert stage_cost(world, NavState((0, 0), 0, 3.0), TRANSMIT) == (-3.0, 0.9)

    def test_certain_collection_has_one_outcome(self):
        world = NavWorld(GridMap(3, 3), NavConfig(((2, 2),), ((0, 0),)), NavParams(success_prob=1.0))
        outcomes = transition_outcomes(world, NavState((2, 2), 1, 0.0), NavAction.collect(0))
        assert len(outcomes) == 1 and outcomes[0].state.info == 10.0

    def test_sample_outcomes_batch(self, tiny_world):
        outcomes = transition_outcomes(tiny_world, NavState((2, 2), 1, 0.0), NavAction.collect(0))
        draws = sample_outcomes(outcomes, 5, stream(1))
        assert len(draws) == 5
        assert {s.info for s in draws} <= {10.0, 2.0}


class TestConfigurations:
    def test_config_validation(self):
        with pytest.raises(InvalidInstance):
            NavConfig(((1, 1), (1, 1)), ((0, 0),))
        with pytest.raises(InvalidInstance):
            NavConfig((), ((0, 0),))

    def test_relevant_point_on_obstacle(self):
        with pytest.raises(InvalidInstance):
            NavWorld(GridMap(3, 3, frozenset({(2, 2)})), NavConfig(((2, 2),), ((0, 0),)))

    def test_sample_configuration(self, open_grid):
        config = sample_configuration(open_grid, GridSpec(width=5, height=5, obstacles=[], n_waypoints=4,
                                                          n_transmission=2), stream(3))
        cells = [*config.waypoints, *config.transmission_points]
        assert len(config.waypoints) == 4 and len(config.transmission_points) == 2
        assert len(set(cells)) == 6
        assert all(open_grid.is_free(c) for c in cells)

    def test_configuration_must_fit(self):
        with pytest.raises(InvalidInstance):
            sample_configuration(GridMap(2, 1), GridSpec(width=2, height=1, obstacles=[], n_waypoints=2,
                                                         n_transmission=1), stream(0))

    def test_start_state(self, wall_world):
        state = sample_start_state(wall_world, stream(2), unvisited_count=1)
        assert bin(state.unvisited).count("1") == 1
        assert state.info == 0.0
        assert wall_world.grid.is_free(state.robot)
        full = sample_start_state(wall_world, stream(2))
        assert full.unvisited == wall_world.config.full_mask

    def test_disconnected_grid_rejected(self):
        with pytest.raises(InvalidInstance):
            grid_from_spec(GridSpec(width=3, height=3, obstacles=[(1, 0), (1, 1), (1, 2)]))

    def test_world_from_instance_file(self):
        world = world_from_instance(load_model(DATA / "instances" / "corridor_3x3.json", InstanceFile))
        assert world.config.waypoints == ((2, 2),)
        assert world.params.observation_radius == 1
        assert episode_cap(world) == 4 * 2 * 2

    def test_with_config_shares_distances(self, wall_world):
        other = wall_world.with_config(NavConfig(((0, 0),), ((5, 5),)))
        assert other.dists is wall_world.dists
        assert np.isfinite(other.dists.dist((0, 0), (5, 5)))
