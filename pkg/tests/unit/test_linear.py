"""Tests for linear function approximation, softmax policies and fixed-point oracles."""

from __future__ import annotations

import logging

import numpy as np
import pytest

from resilient_consensus_ac.consensus import ContainmentMonitor
from resilient_consensus_ac.exceptions import (
    ResilientNumericError,
    ResilientValidationError,
)
from resilient_consensus_ac.linear import (
    FeatureMap,
    FixedPointOracle,
    LinearEstimator,
    LinearParams,
    SoftmaxPolicy,
    actor_step,
    closed_classes,
    critic_value,
    estimated_global_td,
    example1_features,
    grid_features,
    grid_policy,
    joint_policy_matrix,
    local_reward_error,
    local_td_error,
    log_policy_grad,
    policy_probs,
    reward_value,
    sgd_critic,
    sgd_reward,
    solve_critic_fixed_point,
    solve_reward_fixed_point,
    stationary_distribution,
    tabular_policy,
)
from resilient_consensus_ac.mmdp import GridWorldSpec, TabularMMDP, example1_mdp


class TestValuesAndErrors:
    """価値・報酬モデル・TD誤差の式"""

    def test_reward_value_example(self) -> None:
        assert reward_value(np.array([2.0, -4.0]), np.array([1.0, 1.0])) == -2.0

    def test_local_td_error_example(self) -> None:
        v = np.array([2.0, 1.0])
        delta = local_td_error(1.0, v, np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.9)
        assert delta == pytest.approx(-0.1)

    def test_reward_error_exact_fit_is_zero(self) -> None:
        lam = np.array([2.0, -4.0])
        for s, reward in ((0, 2.0), (1, -2.0)):
            assert local_reward_error(reward, lam, np.array([1.0, float(s)])) == 0.0

    def test_reward_error_with_zero_model(self) -> None:
        assert local_reward_error(3.5, np.zeros(2), np.array([1.0, 1.0])) == 3.5

    def test_global_td_uses_reward_model(self) -> None:
        lam = np.array([1.0, 0.0])
        v = np.array([2.0, 1.0])
        delta = estimated_global_td(
            lam,
            v,
            np.array([1.0, 0.0]),
            np.array([1.0, 0.0]),
            np.array([0.0, 1.0]),
            0.9,
        )
        assert delta == pytest.approx(-0.1)

    def test_sgd_critic_shift(self) -> None:
        updated = sgd_critic(np.zeros(2), 0.1, 2.0, np.array([1.0, 0.0]))
        np.testing.assert_allclose(updated, [0.2, 0.0])

    def test_sgd_reward_dimension_mismatch(self) -> None:
        with pytest.raises(ResilientValidationError):
            sgd_reward(np.zeros(2), 0.1, 1.0, np.zeros(3))

    def test_critic_value_dimension_mismatch(self) -> None:
        with pytest.raises(ResilientValidationError):
            critic_value(np.zeros(2), np.zeros(3))

    def test_linear_params(self) -> None:
        params = LinearParams.zeros(2, 3)
        assert params.is_finite()
        assert not LinearParams(np.array([np.nan]), np.zeros(1)).is_finite()


class TestFeatureMaps:
    """特徴写像の構成"""

    def test_example1_features(self) -> None:
        features = example1_features()
        np.testing.assert_array_equal(features.phi(1), [1.0, 1.0])
        np.testing.assert_array_equal(features.f(0, (0, 0, 0)), [1.0, 0.0])

    def test_one_hot_rows(self, small_mdp: TabularMMDP) -> None:
        features = FeatureMap.one_hot(small_mdp)
        f = features.f(2, (1, 0))
        assert f.shape == (16,)
        assert int(np.argmax(f)) == 2 * 4 + small_mdp.joint_index((1, 0))
        features.check_rank(small_mdp)

    def test_rank_deficient_features_rejected(self) -> None:
        phi = np.array([[1.0, 2.0], [2.0, 4.0]])
        with pytest.raises(ResilientValidationError) as exc_info:
            FeatureMap.from_matrices(phi, np.eye(2), (1,))
        assert exc_info.value.details["validation_type"] == "feature_rank"

    def test_grid_features_drop_reference_cell(self, tiny_grid: GridWorldSpec) -> None:
        features = grid_features(tiny_grid)
        assert features.n_state_features == 1 + 2 * 8
        phi = features.phi(((0, 0), (2, 2)))
        # 2番目のエージェントは最終セルにいるので指示関数は立たない
        assert phi.sum() == 2.0
        assert phi[0] == 1.0
        assert phi[1] == 1.0

    def test_grid_action_features(self, tiny_grid: GridWorldSpec) -> None:
        features = grid_features(tiny_grid)
        assert features.n_state_action_features == 1 + 2 * (9 * 5 - 1)
        f = features.f(((1, 0), (0, 0)), (3, 0))
        assert f.sum() == 3.0
        assert f[1 + 1 * 5 + 3] == 1.0


class TestSoftmaxPolicy:
    """線形ソフトマックス方策"""

    def test_uniform_log_grad(self) -> None:
        policy = tabular_policy(1, 4)
        np.testing.assert_allclose(policy.probs(0), [0.25] * 4)
        np.testing.assert_allclose(
            log_policy_grad(policy, 0, 2), [-0.25, -0.25, 0.75, -0.25]
        )

    def test_log_grad_matches_finite_differences(self) -> None:
        rng = np.random.default_rng(5)
        h = 1e-6
        for _ in range(100):
            n_actions = int(rng.integers(2, 6))
            dim = int(rng.integers(1, 8))
            scores = rng.normal(size=(n_actions, dim))
            theta = rng.uniform(-2.0, 2.0, size=dim)
            policy = SoftmaxPolicy.create(lambda _s, m=scores: m, dim, theta=theta)
            action = int(rng.integers(n_actions))
            analytic = log_policy_grad(policy, 0, action)

            numeric = np.empty(dim)
            for k in range(dim):
                bump = np.zeros(dim)
                bump[k] = h
                up = SoftmaxPolicy.create(
                    lambda _s, m=scores: m, dim, theta=theta + bump
                )
                down = SoftmaxPolicy.create(
                    lambda _s, m=scores: m, dim, theta=theta - bump
                )
                numeric[k] = (
                    np.log(policy_probs(up, 0)[action])
                    - np.log(policy_probs(down, 0)[action])
                ) / (2 * h)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)

    def test_actor_step_projects_onto_box(self) -> None:
        policy = tabular_policy(1, 2, bound=1.0)
        stepped = actor_step(policy, 10.0, 1.0, np.array([1.0, -0.5]))
        np.testing.assert_array_equal(stepped.theta, [1.0, -1.0])
        # 元の方策は変更されない
        np.testing.assert_array_equal(policy.theta, [0.0, 0.0])

    def test_theta_outside_bounds_rejected(self) -> None:
        with pytest.raises(ResilientValidationError):
            SoftmaxPolicy.create(
                lambda _s: np.eye(2), 2, bound=1.0, theta=np.array([2.0, 0.0])
            )

    def test_invalid_action(self) -> None:
        with pytest.raises(ResilientValidationError):
            log_policy_grad(tabular_policy(1, 2), 0, 2)

    def test_sampling_is_seeded(self) -> None:
        policy = tabular_policy(2, 3)
        first = [policy.sample(1, np.random.default_rng(9)) for _ in range(5)]
        second = [policy.sample(1, np.random.default_rng(9)) for _ in range(5)]
        assert first == second

    def test_grid_policy_uses_own_cell(self, tiny_grid: GridWorldSpec) -> None:
        policy = grid_policy(tiny_grid, 1)
        psi = policy.log_grad(((0, 0), (1, 1)), 4)
        block = 4 * 5
        assert psi[block + 4] == pytest.approx(0.8)
        assert np.count_nonzero(psi) == 5

    def test_joint_policy_matrix(self, small_mdp: TabularMMDP) -> None:
        policies = [tabular_policy(4, 2), tabular_policy(4, 2)]
        table = joint_policy_matrix(policies, small_mdp)
        assert table.shape == (4, 4)
        np.testing.assert_allclose(table, 0.25)


class TestStationaryDistribution:
    def test_uniform_chain(self) -> None:
        d = stationary_distribution(np.array([[0.5, 0.5], [0.5, 0.5]]))
        np.testing.assert_allclose(d, [0.5, 0.5])

    def test_satisfies_balance(self, small_mdp: TabularMMDP) -> None:
        p_pi = small_mdp.transition.mean(axis=1)
        d = stationary_distribution(p_pi)
        np.testing.assert_allclose(d @ p_pi, d, atol=1e-10)
        assert d.sum() == pytest.approx(1.0)

    def test_periodic_chain_fails(self) -> None:
        with pytest.raises(ResilientNumericError) as exc_info:
            stationary_distribution(np.array([[0.0, 1.0], [1.0, 0.0]]), max_iter=1000)
        assert exc_info.value.details["operation"] == "stationary_distribution"

    def test_non_stochastic_rejected(self) -> None:
        with pytest.raises(ResilientValidationError):
            stationary_distribution(np.array([[0.5, 0.4], [0.5, 0.5]]))

    def test_reducible_chain_rejected(self) -> None:
        """どの状態からも出られない恒等遷移では定常分布が一意に決まらない"""
        with pytest.raises(ResilientNumericError) as exc_info:
            stationary_distribution(np.eye(3))
        assert exc_info.value.details["operation"] == "stationary_distribution"
        assert "3 closed classes" in exc_info.value.details["suggestion"]

    def test_two_absorbing_blocks_rejected(self) -> None:
        p = np.array(
            [
                [0.5, 0.5, 0.0, 0.0],
                [0.5, 0.5, 0.0, 0.0],
                [0.0, 0.0, 0.2, 0.8],
                [0.0, 0.0, 0.6, 0.4],
            ]
        )
        assert sorted(sorted(c) for c in closed_classes(p)) == [[0, 1], [2, 3]]
        with pytest.raises(ResilientNumericError):
            stationary_distribution(p)

    def test_transient_state_allowed(self) -> None:
        """再帰類が1つなら一時的な状態があっても一意"""
        p = np.array([[0.0, 1.0, 0.0], [0.0, 0.5, 0.5], [0.0, 0.5, 0.5]])
        assert closed_classes(p) == [{1, 2}]
        d = stationary_distribution(p)
        np.testing.assert_allclose(d, [0.0, 0.5, 0.5], atol=1e-10)


class TestFixedPoints:
    """固定点オラクル"""

    def test_example1_reward_fixed_point(self) -> None:
        mdp = example1_mdp(0.5)
        oracle = FixedPointOracle.from_policy(mdp, example1_features(), np.ones((2, 1)))
        np.testing.assert_allclose(
            solve_reward_fixed_point(oracle), [2.0, -4.0], atol=1e-10
        )

    def test_example1_critic_fixed_point(self) -> None:
        """平均報酬0の対称チェーンでは V = r̄ となり v = [2, −4]"""
        mdp = example1_mdp(0.5)
        oracle = FixedPointOracle.from_policy(mdp, example1_features(), np.ones((2, 1)))
        np.testing.assert_allclose(
            solve_critic_fixed_point(oracle, 0.9), [2.0, -4.0], atol=1e-10
        )

    def test_one_hot_critic_is_bellman_solution(self, small_mdp: TabularMMDP) -> None:
        pi = np.full((4, 4), 0.25)
        features = FeatureMap.one_hot(small_mdp)
        oracle = FixedPointOracle.from_policy(small_mdp, features, pi)
        gamma = 0.5
        v = solve_critic_fixed_point(oracle, gamma)
        expected = np.linalg.solve(np.eye(4) - gamma * oracle.p_pi, oracle.rbar_pi)
        np.testing.assert_allclose(v, expected, atol=1e-10)

    def test_one_hot_reward_is_team_average(self, small_mdp: TabularMMDP) -> None:
        pi = np.full((4, 4), 0.25)
        features = FeatureMap.one_hot(small_mdp)
        oracle = FixedPointOracle.from_policy(small_mdp, features, pi)
        lam = solve_reward_fixed_point(oracle)
        expected = small_mdp.team_average_reward().ravel()
        np.testing.assert_allclose(lam, expected, atol=1e-10)

    def test_unvisited_pairs_make_system_singular(self, small_mdp: TabularMMDP) -> None:
        pi = np.zeros((4, 4))
        pi[:, 0] = 1.0
        features = FeatureMap.one_hot(small_mdp)
        oracle = FixedPointOracle.from_policy(small_mdp, features, pi)
        with pytest.raises(ResilientNumericError):
            solve_reward_fixed_point(oracle)

    def test_bad_gamma(self) -> None:
        oracle = FixedPointOracle.from_policy(
            example1_mdp(0.5), example1_features(), np.ones((2, 1))
        )
        with pytest.raises(ResilientValidationError):
            solve_critic_fixed_point(oracle, 1.0)


class TestLinearEstimator:
    """線形近似器の合意更新"""

    def test_own_message_only_reproduces_sgd(self) -> None:
        estimator = LinearEstimator(2)
        own = np.array([0.3, -0.1])
        x = np.array([1.0, 2.0])
        sent = estimator.sgd(own, 0.1, 0.7, x)
        updated = estimator.consensus_update(0, own, {0: sent}, [x], 0.1, 0)
        np.testing.assert_allclose(updated, sent)

    def test_byzantine_message_is_trimmed(self) -> None:
        estimator = LinearEstimator(2)
        own = np.zeros(2)
        x = np.array([1.0, 0.0])
        received = {i: estimator.sgd(own, 0.1, float(i + 1), x) for i in range(3)}
        received[3] = np.array([100.0, 0.0])
        monitor = ContainmentMonitor(cooperative=frozenset({0, 1, 2}))
        updated = estimator.consensus_update(1, own, received, [x], 0.1, 1, monitor)
        # 誤差 1000 と 1 が除かれ、2 と 3 の平均 2.5 で更新される
        np.testing.assert_allclose(updated, [0.25, 0.0])
        assert monitor.ok
        assert monitor.checks == 1

    def test_parameter_average(self) -> None:
        estimator = LinearEstimator(2, aggregation="parameter_average")
        received = {0: np.array([1.0, 0.0]), 1: np.array([3.0, 2.0])}
        updated = estimator.consensus_update(
            0, np.zeros(2), received, [np.ones(2)], 0.1, 0
        )
        np.testing.assert_allclose(updated, [2.0, 1.0])

    def test_trimmed_mean_aggregation(self) -> None:
        estimator = LinearEstimator(1, aggregation="trimmed_mean")
        received = {i: np.array([float(v)]) for i, v in enumerate([1, 2, 3, 50])}
        updated = estimator.consensus_update(
            0, np.zeros(1), received, [np.ones(1)], 0.1, 1
        )
        np.testing.assert_allclose(updated, [2.5])

    def test_batch_without_neighbors_reproduces_sgd_batch(self) -> None:
        """近傍なし・H=0 のバッチ合意はバッチ平均SGDそのもの"""
        estimator = LinearEstimator(4)
        own = np.zeros(4)
        xs = [np.eye(4)[0], np.eye(4)[1]]
        sent = estimator.sgd_batch(own, 0.1, [1.0, 2.0], xs)
        np.testing.assert_allclose(sent, [0.05, 0.1, 0.0, 0.0])
        updated = estimator.consensus_update(0, own, {0: sent}, xs, 0.1, 0)
        np.testing.assert_allclose(updated, sent, atol=1e-12)

    @pytest.mark.parametrize(
        "xs",
        [
            [np.array([1.0, 2.0, 0.0]), np.array([1.0, 2.0, 0.0])],
            [np.array([1.0, 0.5, 0.0]), np.array([0.5, 1.0, 1.0])],
            [np.array([1.0, 0.0, 0.0]), np.array([2.0, 0.0, 0.0]), np.ones(3)],
        ],
        ids=["duplicate", "correlated", "collinear"],
    )
    def test_batch_with_overlapping_features(self, xs: list[np.ndarray]) -> None:
        estimator = LinearEstimator(3)
        own = np.array([0.2, -0.3, 0.1])
        deltas = [0.7, -1.2, 0.4][: len(xs)]
        sent = estimator.sgd_batch(own, 0.05, deltas, xs)
        updated = estimator.consensus_update(2, own, {2: sent}, xs, 0.05, 0)
        np.testing.assert_allclose(updated, sent, atol=1e-12)

    def test_batch_trims_each_sample(self) -> None:
        """サンプル毎に送信者の誤差をトリムする"""
        estimator = LinearEstimator(2)
        own = np.zeros(2)
        xs = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        received = {
            i: estimator.sgd_batch(own, 0.1, [float(i + 1), -float(i + 1)], xs)
            for i in range(3)
        }
        received[3] = np.array([100.0, -100.0])
        monitor = ContainmentMonitor(cooperative=frozenset({0, 1, 2}))
        updated = estimator.consensus_update(1, own, received, xs, 0.1, 1, monitor)
        # 各サンプルで 2 と 3（符号反転側も同様）の平均 2.5 が残る
        np.testing.assert_allclose(updated, [0.125, -0.125])
        assert monitor.ok
        assert monitor.checks == 2

    def test_batch_degenerate_sample_is_skipped(self) -> None:
        estimator = LinearEstimator(2)
        own = np.zeros(2)
        xs = [np.array([1.0, 0.0]), np.zeros(2)]
        sent = estimator.sgd_batch(own, 0.1, [2.0, 5.0], xs)
        updated = estimator.consensus_update(0, own, {0: sent}, xs, 0.1, 0)
        np.testing.assert_allclose(updated, [0.1, 0.0])

    def test_degenerate_feature_skips_step(
        self, caplog_package: pytest.LogCaptureFixture
    ) -> None:
        estimator = LinearEstimator(2)
        own = np.array([1.0, 1.0])
        updated = estimator.consensus_update(
            4, own, {4: np.array([2.0, 2.0])}, [np.zeros(2)], 0.1, 0
        )
        np.testing.assert_array_equal(updated, own)
        warnings = [r for r in caplog_package.records if r.levelno == logging.WARNING]
        assert warnings
        assert warnings[0].context["agent_id"] == 4  # type: ignore[attr-defined]

    def test_sgd_batch_single_sample_matches_sgd(self) -> None:
        estimator = LinearEstimator(2)
        own = np.array([0.5, 0.5])
        x = np.array([1.0, -1.0])
        np.testing.assert_array_equal(
            estimator.sgd_batch(own, 0.2, [0.3], [x]), estimator.sgd(own, 0.2, 0.3, x)
        )
