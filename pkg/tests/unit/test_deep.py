"""MLP近似器による合意更新と方策のテスト"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resilient_consensus_ac.consensus import ContainmentMonitor
from resilient_consensus_ac.deep import (
    MlpEstimator,
    MlpPolicy,
    deep_consensus_round,
    deep_project_error,
    grid_encoders,
    hidden_layers,
    hidden_trimmed_consensus,
    tabular_encoders,
)
from resilient_consensus_ac.exceptions import (
    DegenerateFeatureError,
    ResilientValidationError,
)
from resilient_consensus_ac.linear import LinearEstimator
from resilient_consensus_ac.mlp import Mlp
from resilient_consensus_ac.mmdp import GridWorldSpec, TabularMMDP


class TestDeepProjection:
    """出力層での射影推定"""

    @pytest.mark.parametrize("error", [-3.5, 0.0, 0.25, 12.0])
    def test_recovers_output_layer_step(self, error: float) -> None:
        """出力層だけをSGDで動かした送信値から誤差を復元する"""
        mlp = Mlp((3, 6, 4, 1))
        own = mlp.init_params(11)
        x = np.array([0.2, -1.0, 0.7])
        alpha = 0.05
        hidden, output = mlp.split(own)
        received = mlp.join(
            hidden, output + alpha * error * mlp.output_gradient(own, x)
        )
        recovered = deep_project_error(mlp, own, received, x, alpha)
        assert recovered == pytest.approx(error, abs=1e-10)

    @settings(max_examples=1000, deadline=None)
    @given(
        error=st.floats(min_value=-50, max_value=50, allow_nan=False),
        alpha=st.floats(min_value=1e-3, max_value=1.0),
        seed=st.integers(min_value=0, max_value=10_000),
    )
    def test_recovers_random_output_layer_steps(
        self, error: float, alpha: float, seed: int
    ) -> None:
        mlp = Mlp((3, 5, 1))
        own = mlp.init_params(seed)
        x = np.random.default_rng(seed).normal(size=3)
        hidden, output = mlp.split(own)
        grad = mlp.output_gradient(own, x)
        received = mlp.join(hidden, output + alpha * error * grad)
        recovered = deep_project_error(mlp, own, received, x, alpha)
        assert recovered == pytest.approx(error, rel=1e-10, abs=1e-8)

    def test_vanishing_gradient(self) -> None:
        mlp = Mlp((2, 1), use_bias=False)
        with pytest.raises(DegenerateFeatureError):
            deep_project_error(mlp, mlp.zeros(), mlp.zeros(), np.zeros(2), 0.1)

    def test_step_size_must_be_positive(self) -> None:
        mlp = Mlp((2, 1))
        with pytest.raises(ResilientValidationError):
            deep_project_error(mlp, mlp.zeros(), mlp.zeros(), np.ones(2), -0.1)


class TestMlpEstimator:
    """深層推定器の合意更新"""

    def test_scalar_output_required(self) -> None:
        with pytest.raises(ResilientValidationError):
            MlpEstimator(Mlp((2, 3, 2)))

    def test_linear_network_matches_linear_estimator(self) -> None:
        """隠れ層もバイアスもないネットワークは線形推定器と同じ更新を行う"""
        rng = np.random.default_rng(8)
        deep = MlpEstimator(Mlp((4, 1), use_bias=False))
        linear = LinearEstimator(size=4)
        own = rng.normal(size=4)
        x = rng.normal(size=4)
        received = {j: own + rng.normal(size=4) for j in range(1, 5)}
        received[0] = own.copy()
        received[4] = own + 100.0 * x

        expected = linear.consensus_update(0, own, received, [x], 0.1, 1)
        actual = deep.consensus_update(0, own, received, [x], 0.1, 1)
        np.testing.assert_allclose(actual, expected, rtol=1e-10, atol=1e-12)

    def test_batch_without_neighbors_reproduces_sgd_batch(self) -> None:
        """隠れ層がなければ、近傍なし・H=0 のバッチ合意はバッチSGDと一致する"""
        estimator = MlpEstimator(Mlp((4, 1), use_bias=False))
        own = estimator.mlp.zeros()
        xs = [np.eye(4)[0], np.eye(4)[1]]
        sent = estimator.sgd_batch(own, 0.1, [1.0, 2.0], xs)
        np.testing.assert_allclose(sent, [0.05, 0.1, 0.0, 0.0])
        updated = estimator.consensus_update(0, own, {0: sent}, xs, 0.1, 0)
        np.testing.assert_allclose(updated, sent, atol=1e-12)

    def test_batch_output_layer_step_is_reproduced(self) -> None:
        """出力層だけをバッチ平均で動かした自分の送信値は、合意後もそのまま残る"""
        mlp = Mlp((3, 5, 1))
        estimator = MlpEstimator(mlp)
        own = mlp.init_params(6)
        xs = [np.array([0.2, -1.0, 0.7]), np.array([1.0, 0.3, -0.4]), np.ones(3)]
        deltas = [0.5, -2.0, 1.5]
        hidden, output = mlp.split(own)
        step = np.mean(
            [d * mlp.output_gradient(own, x) for d, x in zip(deltas, xs)], axis=0
        )
        sent = mlp.join(hidden, output + 0.05 * step)
        updated = estimator.consensus_update(1, own, {1: sent}, xs, 0.05, 0)
        np.testing.assert_allclose(updated, sent, atol=1e-10)

    def test_sgd_matches_gradient_step(self) -> None:
        estimator = MlpEstimator(Mlp((2, 3, 1)))
        params = estimator.mlp.init_params(0)
        x = np.array([0.5, 0.5])
        stepped = estimator.sgd(params, 0.1, 2.0, x)
        np.testing.assert_allclose(
            stepped, params + 0.2 * estimator.gradient(params, x)
        )
        batched = estimator.sgd_batch(params, 0.1, [2.0], [x])
        np.testing.assert_array_equal(batched, stepped)

    def test_hidden_block_uses_trimmed_mean(self) -> None:
        mlp = Mlp((2, 2, 1))
        estimator = MlpEstimator(mlp)
        base = mlp.init_params(4)
        received = {}
        for j, shift in enumerate([0.0, 0.1, -0.1, 1000.0]):
            hidden, output = mlp.split(base)
            received[j] = mlp.join(hidden + shift, output)
        x = np.array([1.0, 0.5])
        updated = estimator.consensus_update(0, received[0], received, [x], 0.1, 1)
        new_hidden, _ = mlp.split(updated)
        # 1000 と −0.1 が除かれ、0 と 0.1 の平均になる
        np.testing.assert_allclose(new_hidden, mlp.split(base)[0] + 0.05)

    def test_hidden_consensus_includes_own_block(self) -> None:
        blocks = [np.array([1.0]), np.array([2.0]), np.array([9.0])]
        np.testing.assert_allclose(hidden_trimmed_consensus(blocks, 1), [2.0])

    def test_round_updates_both_channels(self) -> None:
        critic = MlpEstimator(Mlp((2, 3, 1)))
        reward = MlpEstimator(Mlp((3, 3, 1)))
        v = critic.mlp.init_params(1)
        lam = reward.mlp.init_params(2)
        inbox = {0: (v, lam), 1: (v.copy(), lam.copy()), 2: (v.copy(), lam.copy())}
        monitor = ContainmentMonitor(cooperative=frozenset({0, 1, 2}))
        new_v, new_lam = deep_consensus_round(
            critic,
            reward,
            0,
            v,
            lam,
            inbox,
            [np.array([1.0, 0.0])],
            [np.array([0.0, 1.0, 0.0])],
            0.1,
            0.1,
            1,
            monitor,
        )
        # 全員が同じ値なら誤差は0で、パラメータは変わらない
        np.testing.assert_allclose(new_v, v)
        np.testing.assert_allclose(new_lam, lam)
        assert monitor.checks == 2
        assert monitor.ok

    def test_round_accepts_linear_estimators(self) -> None:
        critic = LinearEstimator(2)
        reward = LinearEstimator(3)
        v = np.array([0.5, -0.5])
        lam = np.array([1.0, 0.0, 2.0])
        x_v = np.array([1.0, 0.0])
        x_lam = np.array([0.0, 0.0, 1.0])
        sent_v = critic.sgd(v, 0.1, 2.0, x_v)
        sent_lam = reward.sgd(lam, 0.2, -1.0, x_lam)
        new_v, new_lam = deep_consensus_round(
            critic,
            reward,
            0,
            v,
            lam,
            {0: (sent_v, sent_lam)},
            [x_v],
            [x_lam],
            0.1,
            0.2,
            0,
        )
        np.testing.assert_allclose(new_v, sent_v)
        np.testing.assert_allclose(new_lam, sent_lam)


class TestMlpPolicy:
    """MLP方策"""

    def test_probabilities_sum_to_one(self, small_mdp: TabularMMDP) -> None:
        encoders = tabular_encoders(small_mdp)
        mlp = Mlp((encoders.state_size, 4, 2))
        policy = MlpPolicy(mlp, mlp.init_params(0), encoders.state)
        probs = policy.probs(1)
        assert probs.shape == (2,)
        assert probs.sum() == pytest.approx(1.0)

    def test_log_grad_matches_finite_differences(self, small_mdp: TabularMMDP) -> None:
        encoders = tabular_encoders(small_mdp)
        mlp = Mlp((encoders.state_size, 4, 3))
        theta = mlp.init_params(6)
        policy = MlpPolicy(mlp, theta, encoders.state)
        analytic = policy.log_grad(2, 1)

        h = 1e-6
        numeric = np.zeros_like(theta)
        for k in range(theta.shape[0]):
            up, down = theta.copy(), theta.copy()
            up[k] += h
            down[k] -= h
            numeric[k] = (
                np.log(MlpPolicy(mlp, up, encoders.state).probs(2)[1])
                - np.log(MlpPolicy(mlp, down, encoders.state).probs(2)[1])
            ) / (2 * h)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)

    def test_step_is_clipped(self, small_mdp: TabularMMDP) -> None:
        encoders = tabular_encoders(small_mdp)
        mlp = Mlp((encoders.state_size, 2))
        policy = MlpPolicy(mlp, mlp.zeros(), encoders.state, bound=1.0)
        stepped = policy.step(1.0, 10.0, np.ones(mlp.n_params))
        assert np.all(stepped.params == 1.0)

    def test_invalid_action(self, small_mdp: TabularMMDP) -> None:
        encoders = tabular_encoders(small_mdp)
        mlp = Mlp((encoders.state_size, 2))
        policy = MlpPolicy(mlp, mlp.zeros(), encoders.state)
        with pytest.raises(ResilientValidationError):
            policy.log_grad(0, 2)


class TestEncoders:
    def test_grid_encoding(self, tiny_grid: GridWorldSpec) -> None:
        encoders = grid_encoders(tiny_grid)
        state = ((2, 0), (1, 2))
        np.testing.assert_allclose(encoders.state(state), [1.0, 0.0, 0.5, 1.0])
        encoded = encoders.state_action(state, (3, 0))
        assert encoded.shape == (encoders.state_action_size,)
        assert encoded[4 + 3] == 1.0
        assert encoded[4 + 5] == 1.0
        assert encoded[4:].sum() == 2.0

    def test_tabular_encoding(self, small_mdp: TabularMMDP) -> None:
        encoders = tabular_encoders(small_mdp)
        encoded = encoders.state_action(3, (1, 0))
        assert encoded.shape == (8,)
        assert encoded[3] == 1.0
        assert encoded[4 + 2] == 1.0
        assert encoders.n_local_actions == (2, 2)

    def test_hidden_layers(self) -> None:
        assert hidden_layers() == (30, 30)
        assert hidden_layers(8, 1) == (8,)
