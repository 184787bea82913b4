"""MLP近似器による深層版：隠れ層はトリム平均、出力層は射影によるレジリエント合意"""

from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from .consensus import (
    ContainmentMonitor,
    batch_project_errors,
    elementwise_trimmed_mean,
    log_degenerate_step,
    resilient_error,
)
from .exceptions import DegenerateFeatureError, ResilientValidationError
from .mlp import Mlp
from .mmdp import MOVES, GridWorldSpec, TabularMMDP

if TYPE_CHECKING:
    from .agents import Estimator
    from .types import FloatArray, GlobalState

HIDDEN_WIDTH = 30
HIDDEN_LAYERS = 2
DEFAULT_POLICY_BOUND = 50.0

StateEncoder = Callable[["GlobalState"], "FloatArray"]
StateActionEncoder = Callable[["GlobalState", Sequence[int]], "FloatArray"]


def hidden_trimmed_consensus(blocks: Sequence[FloatArray], trim: int) -> FloatArray:
    """隠れブロック（自分の送信分を含む）の要素毎トリム平均

    自分の値を基準にした保護は行わない。
    """
    return elementwise_trimmed_mean(blocks, trim)


def deep_project_error(
    mlp: Mlp,
    own: FloatArray,
    received: FloatArray,
    x: FloatArray,
    alpha: float,
) -> float:
    """出力値の差を出力層勾配のノルム二乗で正規化して送信側の誤差を推定する"""
    if alpha <= 0:
        raise ResilientValidationError(
            "step size must be positive",
            validation_type="step_size",
            invalid_value=alpha,
        )
    grad = mlp.output_gradient(own, x)
    norm_sq = float(grad @ grad)
    if norm_sq == 0.0:
        raise DegenerateFeatureError(
            "Output-layer gradient vanished", feature_norm=0.0
        )
    return (mlp.value(received, x) - mlp.value(own, x)) / (alpha * norm_sq)


@dataclass(frozen=True)
class MlpEstimator:
    """スカラー出力MLPを近似器とする推定器"""

    mlp: Mlp

    def __post_init__(self) -> None:
        if self.mlp.n_outputs != 1:
            raise ResilientValidationError(
                "estimator networks need a scalar output",
                validation_type="layer_sizes",
                invalid_value=self.mlp.layer_sizes,
            )

    @property
    def size(self) -> int:
        return self.mlp.n_params

    def value(self, params: FloatArray, x: FloatArray) -> float:
        return self.mlp.value(params, x)

    def gradient(self, params: FloatArray, x: FloatArray) -> FloatArray:
        return self.mlp.backward(params, x)

    def sgd(
        self, params: FloatArray, alpha: float, delta: float, x: FloatArray
    ) -> FloatArray:
        return np.asarray(params + alpha * delta * self.gradient(params, x))

    def sgd_batch(
        self,
        params: FloatArray,
        alpha: float,
        deltas: Sequence[float],
        inputs: Sequence[FloatArray],
    ) -> FloatArray:
        if len(inputs) == 1:
            return self.sgd(params, alpha, deltas[0], inputs[0])
        direction = np.mean(
            [d * self.gradient(params, x) for d, x in zip(deltas, inputs)], axis=0
        )
        return np.asarray(params + alpha * direction)

    def consensus_update(
        self,
        own_id: int,
        own: FloatArray,
        received: Mapping[int, FloatArray],
        inputs: Sequence[FloatArray],
        alpha: float,
        trim: int,
        monitor: ContainmentMonitor | None = None,
        channel: str = "v",
    ) -> FloatArray:
        """隠れ層をトリム平均で、出力層を新しい隠れ層での勾配方向へ射影合意で更新する"""
        senders = sorted(received)
        hidden = hidden_trimmed_consensus(
            [self.mlp.split(received[j])[0] for j in senders], trim
        )
        _, own_out = self.mlp.split(own)
        staged = self.mlp.join(hidden, own_out)

        if len(inputs) == 1:
            x = inputs[0]
            try:
                errors = {
                    j: deep_project_error(self.mlp, own, received[j], x, alpha)
                    for j in senders
                }
            except DegenerateFeatureError:
                log_degenerate_step(own_id, channel)
                return staged
            eps = resilient_error(errors, own_id, trim, monitor, channel)
            new_out = own_out + alpha * eps * self.mlp.output_gradient(staged, x)
            return self.mlp.join(hidden, new_out)

        grads = [self.mlp.output_gradient(own, x) for x in inputs]
        active = [b for b, g in enumerate(grads) if float(g @ g) > 0.0]
        for _ in range(len(inputs) - len(active)):
            log_degenerate_step(own_id, channel)
        if not active:
            return staged
        directions = np.stack([grads[b] for b in active])
        own_values = [self.mlp.value(own, inputs[b]) for b in active]
        differences = np.array(
            [
                [
                    self.mlp.value(received[j], inputs[b]) - base
                    for b, base in zip(active, own_values)
                ]
                for j in senders
            ]
        )
        estimates = batch_project_errors(
            differences, directions @ directions.T, alpha, len(inputs)
        )
        step = np.zeros_like(own_out)
        for k, b in enumerate(active):
            errors = {j: float(estimates[i, k]) for i, j in enumerate(senders)}
            eps = resilient_error(errors, own_id, trim, monitor, channel)
            step += eps * self.mlp.output_gradient(staged, inputs[b])
        return self.mlp.join(hidden, own_out + alpha * step / len(inputs))


def deep_consensus_round(
    critic: Estimator,
    reward: Estimator,
    own_id: int,
    v: FloatArray,
    lam: FloatArray,
    inbox: Mapping[int, tuple[FloatArray, FloatArray]],
    critic_inputs: Sequence[FloatArray],
    reward_inputs: Sequence[FloatArray],
    alpha_v: float,
    alpha_lam: float,
    trim: int,
    monitor: ContainmentMonitor | None = None,
) -> tuple[FloatArray, FloatArray]:
    """クリティックと報酬モデルの両方に1ラウンドの合意更新を行う

    推定器の種類は問わない（線形推定器では隠れ層のない場合と同じ手順になる）。
    """
    new_v = critic.consensus_update(
        own_id,
        v,
        {j: pair[0] for j, pair in inbox.items()},
        critic_inputs,
        alpha_v,
        trim,
        monitor,
        "v",
    )
    new_lam = reward.consensus_update(
        own_id,
        lam,
        {j: pair[1] for j, pair in inbox.items()},
        reward_inputs,
        alpha_lam,
        trim,
        monitor,
        "lambda",
    )
    return new_v, new_lam


@dataclass(frozen=True)
class MlpPolicy:
    """MLPのロジットにソフトマックスをかける局所方策（パラメータは箱に射影）"""

    mlp: Mlp
    theta: FloatArray
    encode: StateEncoder
    bound: float = DEFAULT_POLICY_BOUND

    @property
    def params(self) -> FloatArray:
        return self.theta

    def probs(self, state: GlobalState) -> FloatArray:
        logits = self.mlp.forward(self.theta, self.encode(state))
        shifted = np.exp(logits - np.max(logits))
        return np.asarray(shifted / shifted.sum())

    def log_grad(self, state: GlobalState, action: int) -> FloatArray:
        x = self.encode(state)
        logits = self.mlp.forward(self.theta, x)
        if not 0 <= action < logits.shape[0]:
            raise ResilientValidationError(
                f"local action {action} outside [0, {logits.shape[0]})",
                validation_type="action_index",
                invalid_value=action,
            )
        shifted = np.exp(logits - np.max(logits))
        upstream = -shifted / shifted.sum()
        upstream[action] += 1.0
        return self.mlp.backward(self.theta, x, upstream)

    def step(self, alpha: float, delta_hat: float, psi: FloatArray) -> MlpPolicy:
        theta = np.clip(self.theta + alpha * delta_hat * psi, -self.bound, self.bound)
        return replace(self, theta=theta)

    def sample(self, state: GlobalState, rng: np.random.Generator) -> int:
        probs = self.probs(state)
        return int(rng.choice(probs.shape[0], p=probs))


def hidden_layers(
    width: int = HIDDEN_WIDTH, depth: int = HIDDEN_LAYERS
) -> tuple[int, ...]:
    return (width,) * depth


@dataclass(frozen=True)
class Encoders:
    """状態・状態行動をネットワーク入力へ変換する関数の組"""

    state: StateEncoder
    state_action: StateActionEncoder
    state_size: int
    state_action_size: int
    n_local_actions: tuple[int, ...]


def grid_encoders(spec: GridWorldSpec) -> Encoders:
    """各エージェントの座標を [0,1] へ正規化し、行動はワンホットで連結する"""
    x_scale = max(spec.width - 1, 1)
    y_scale = max(spec.height - 1, 1)
    n_moves = len(MOVES)

    def state(s: GlobalState) -> FloatArray:
        coords = np.empty(2 * spec.n_agents)
        for i, (x, y) in enumerate(s):  # type: ignore[arg-type]
            coords[2 * i] = x / x_scale
            coords[2 * i + 1] = y / y_scale
        return coords

    def state_action(s: GlobalState, action: Sequence[int]) -> FloatArray:
        actions = np.zeros(n_moves * spec.n_agents)
        for i, a in enumerate(action):
            actions[i * n_moves + int(a)] = 1.0
        return np.concatenate([state(s), actions])

    return Encoders(
        state=state,
        state_action=state_action,
        state_size=2 * spec.n_agents,
        state_action_size=(2 + n_moves) * spec.n_agents,
        n_local_actions=spec.action_shape,
    )


def tabular_encoders(mdp: TabularMMDP) -> Encoders:
    """状態と結合行動のワンホット表現"""

    def state(s: GlobalState) -> FloatArray:
        encoded = np.zeros(mdp.n_states)
        encoded[int(s)] = 1.0  # type: ignore[arg-type]
        return encoded

    def state_action(s: GlobalState, action: Sequence[int]) -> FloatArray:
        encoded = np.zeros(mdp.n_states + mdp.n_joint_actions)
        encoded[int(s)] = 1.0  # type: ignore[arg-type]
        encoded[mdp.n_states + mdp.joint_index(action)] = 1.0
        return encoded

    return Encoders(
        state=state,
        state_action=state_action,
        state_size=mdp.n_states,
        state_action_size=mdp.n_states + mdp.n_joint_actions,
        n_local_actions=mdp.action_shape,
    )
