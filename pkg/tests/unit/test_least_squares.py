"""
Unit tests for the regularized least-squares accumulator and the outer LS loop
"""

import numpy as np
import pandas as pd
import pytest

from approx.least_squares import (
    LsAccumulator,
    LsResult,
    MdpEpisodeSource,
    TransitionBatch,
    evaluate_policy_ls,
    evaluate_policy_projected,
    ls_merge,
    ls_solve,
    ls_update,
    ls_update_batch,
    ls_weighted_error,
    one_hot_features,
    write_iterates_csv,
)
from core.resilience import DimensionMismatch, InvalidSpec
from core.schemas import RiskMappingSpec
from mdp.model import FiniteMdp, StationaryPolicy
from mdp.solver import evaluate_policy_exact


def random_samples(seed: int, count: int, dim: int = 28):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 5.0, size=(count, dim)), rng.normal(size=count)


class TestLsAccumulator:
    """Rank-one inverse updates"""

    def test_single_update(self):
        acc = ls_update(LsAccumulator.empty(2, 1.0), np.array([1.0, 0.0]), 3.0)
        assert acc.inverse == pytest.approx(np.diag([0.5, 1.0]))
        assert acc.rhs.tolist() == [3.0, 0.0]
        assert ls_solve(acc).tolist() == pytest.approx([1.5, 0.0])
        assert acc.count == 1

    def test_zero_features_leave_system_unchanged(self):
        acc = LsAccumulator.empty(3, 2.0)
        before = acc.inverse.copy()
        ls_update(acc, np.zeros(3), 5.0)
        assert np.array_equal(acc.inverse, before)
        assert acc.rhs.tolist() == [0.0, 0.0, 0.0]

    def test_empty_solution_is_zero(self):
        assert ls_solve(LsAccumulator.empty(4, 1.0)).tolist() == [0.0] * 4

    def test_lambda_must_be_positive(self):
        with pytest.raises(InvalidSpec):
            LsAccumulator.empty(2, 0.0)

    def test_feature_dimension(self):
        with pytest.raises(DimensionMismatch):
            ls_update(LsAccumulator.empty(2, 1.0), np.ones(3), 1.0)

    def test_audit_after_few_updates(self):
        phis, targets = random_samples(0, 20)
        acc = ls_update_batch(LsAccumulator.empty(28, 1.0), phis, targets)
        assert acc.audit() <= 1e-8
        assert acc.is_positive_definite()

    @pytest.mark.slow
    def test_audit_after_many_updates(self):
        phis, targets = random_samples(1, 10_000)
        acc = ls_update_batch(LsAccumulator.empty(28, 1.0), phis, targets)
        assert acc.audit() <= 1e-6

    def test_matches_direct_solve(self):
        phis, targets = random_samples(2, 50, dim=5)
        acc = ls_update_batch(LsAccumulator.empty(5, 0.3), phis, targets)
        direct = np.linalg.solve(0.3 * np.eye(5) + phis.T @ phis, phis.T @ targets)
        assert ls_solve(acc).tolist() == pytest.approx(direct.tolist(), rel=1e-8, abs=1e-10)

    def test_order_invariance(self):
        phis, targets = random_samples(3, 40, dim=6)
        order = np.random.default_rng(4).permutation(40)
        a = ls_solve(ls_update_batch(LsAccumulator.empty(6, 1.0), phis, targets))
        b = ls_solve(ls_update_batch(LsAccumulator.empty(6, 1.0), phis[order], targets[order]))
        assert a.tolist() == pytest.approx(b.tolist(), rel=1e-8, abs=1e-10)

    def test_merge_equals_sequential(self):
        phis, targets = random_samples(5, 30, dim=4)
        whole = ls_update_batch(LsAccumulator.empty(4, 1.0), phis, targets)
        parts = [ls_update_batch(LsAccumulator.empty(4, 1.0), phis[s], targets[s])
                 for s in (slice(0, 10), slice(10, 30))]
        merged = ls_merge(parts)
        assert merged.count == 30
        assert ls_solve(merged).tolist() == pytest.approx(ls_solve(whole).tolist(), rel=1e-8, abs=1e-10)

    def test_constant_features_give_regularized_mean(self):
        targets = np.arange(1.0, 11.0)
        acc = ls_update_batch(LsAccumulator.empty(1, 1e-6), np.ones((10, 1)), targets)
        assert ls_solve(acc)[0] == pytest.approx(55.0 / (10.0 + 1e-6))

    def test_huge_lambda_shrinks_to_zero(self):
        phis, targets = random_samples(6, 20, dim=3)
        acc = ls_update_batch(LsAccumulator.empty(3, 1e12), phis, targets)
        assert np.abs(ls_solve(acc)).max() < 1e-8

    def test_weighted_error(self):
        acc = ls_update(LsAccumulator.empty(2, 1.0), np.array([1.0, 1.0]), 0.0)
        theta = np.array([0.3, -0.2])
        assert ls_weighted_error(acc, theta, theta) == 0.0
        assert ls_weighted_error(acc, np.array([1.0, 0.0]), np.zeros(2)) == pytest.approx(2.0)


class TestTransitionBatch:
    """Target construction from stored successor features"""

    def test_targets_use_empirical_risk(self):
        batch = TransitionBatch(
            phi=np.array([[1.0]]),
            costs=np.array([0.5]),
            discounts=np.array([0.9]),
            successor_phi=np.array([[[1.0], [3.0]]]),
        )
        theta = np.array([2.0])
        assert batch.targets(RiskMappingSpec.worst_case(2), theta).tolist() == pytest.approx([0.5 + 0.9 * 6.0])
        assert batch.targets(RiskMappingSpec.expectation(), theta).tolist() == pytest.approx([0.5 + 0.9 * 4.0])

    def test_empty_batch(self):
        batch = TransitionBatch.empty(3, 2)
        assert batch.size == 0
        assert batch.targets(RiskMappingSpec.worst_case(2), np.ones(3)).size == 0
        assert batch.mean_squared_norm() == 0.0


class TestOuterLoop:
    """Fixed-point iterations of the LS fit"""

    def test_zero_cost_mdp_stays_at_zero(self):
        mdp = FiniteMdp.from_triplets(3, [(0, 0, 1, 0.5), (0, 0, 2, 0.5), (1, 0, 2, 1.0)],
                                      discount=0.9, terminal_states=[2])
        source = MdpEpisodeSource(mdp, StationaryPolicy.first_actions(mdp), one_hot_features(3), episodes=20)
        result = evaluate_policy_ls(source, RiskMappingSpec.worst_case(2), outer_iters=5, seed=1)
        assert all(np.array_equal(theta, np.zeros(3)) for theta in result.thetas)

    def test_iterate_callback_and_history(self, five_state_mdp):
        source = MdpEpisodeSource(five_state_mdp, StationaryPolicy.first_actions(five_state_mdp),
                                  one_hot_features(6), episodes=10)
        seen = []
        result = evaluate_policy_ls(source, RiskMappingSpec.expectation(), outer_iters=3, seed=2,
                                    on_iterate=lambda k, theta, obj, res: seen.append(k))
        assert seen == [1, 2, 3]
        assert len(result.thetas) == 4
        assert len(result.objectives) == len(result.residuals) == len(result.samples) == 3

    def test_same_seed_same_iterates(self, five_state_mdp):
        source = MdpEpisodeSource(five_state_mdp, StationaryPolicy.first_actions(five_state_mdp),
                                  one_hot_features(6), episodes=10)
        a = evaluate_policy_ls(source, RiskMappingSpec.worst_case(2), outer_iters=2, seed=7)
        b = evaluate_policy_ls(source, RiskMappingSpec.worst_case(2), outer_iters=2, seed=7)
        assert np.array_equal(a.theta, b.theta)

    def test_theta0_dimension(self, five_state_mdp):
        source = MdpEpisodeSource(five_state_mdp, StationaryPolicy.first_actions(five_state_mdp),
                                  one_hot_features(6))
        with pytest.raises(DimensionMismatch):
            evaluate_policy_ls(source, RiskMappingSpec.expectation(), outer_iters=1, theta0=np.zeros(2))

    def test_outer_iters_must_be_positive(self, five_state_mdp):
        source = MdpEpisodeSource(five_state_mdp, StationaryPolicy.first_actions(five_state_mdp),
                                  one_hot_features(6))
        with pytest.raises(InvalidSpec):
            evaluate_policy_ls(source, RiskMappingSpec.expectation(), outer_iters=0)

    @pytest.mark.parametrize("spec", [RiskMappingSpec.expectation(), RiskMappingSpec.worst_case(2)],
                             ids=lambda s: s.label)
    def test_projected_one_hot_matches_exact(self, spec, five_state_mdp):
        policy = StationaryPolicy.first_actions(five_state_mdp)
        thetas = evaluate_policy_projected(five_state_mdp, policy, spec, one_hot_features(6), outer_iters=60)
        exact = evaluate_policy_exact(five_state_mdp, policy, spec, tol=1e-12)
        assert thetas[-1].tolist() == pytest.approx(exact.value.tolist(), abs=1e-8)

    def test_write_iterates_csv(self, tmp_path):
        result = LsResult(thetas=[np.zeros(2), np.array([1.0, 2.0])], objectives=[0.5],
                          residuals=[2.0], lambdas=[1e-6], samples=[12])
        path = write_iterates_csv(result, tmp_path / "iterates.csv")
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["iteration", "samples", "lambda", "objective", "residual",
                                       "theta_0", "theta_1"]
        assert frame.loc[0, "theta_1"] == 2.0
