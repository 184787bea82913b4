"""線形関数近似（クリティック・報酬モデル・ソフトマックス方策）と不動点オラクル"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Callable, Literal

import networkx as nx
import numpy as np

from .consensus import (
    ContainmentMonitor,
    batch_project_errors,
    consensus_apply,
    elementwise_trimmed_mean,
    log_degenerate_step,
    project_error,
    resilient_error,
)
from .exceptions import (
    DegenerateFeatureError,
    ResilientNumericError,
    ResilientValidationError,
)
from .mmdp import MOVES, GridWorldSpec, TabularMMDP, grid_cells

if TYPE_CHECKING:
    from .types import FloatArray, GlobalState

DEFAULT_THETA_BOUND = 50.0
STATIONARY_TOLERANCE = 1e-12
STATIONARY_MAX_ITER = 100_000
FIXED_POINT_TOLERANCE = 1e-10
CONDITION_LIMIT = 1e12

StateFeatureFn = Callable[["GlobalState"], "FloatArray"]
StateActionFeatureFn = Callable[["GlobalState", Sequence[int]], "FloatArray"]
ScoreFn = Callable[["GlobalState"], "FloatArray"]


def _check_same_length(left: FloatArray, right: FloatArray, what: str) -> None:
    if left.shape != right.shape:
        raise ResilientValidationError(
            f"{what}: dimension mismatch {left.shape} vs {right.shape}",
            validation_type="dimension",
            invalid_value=(left.shape, right.shape),
        )


@dataclass(frozen=True)
class LinearParams:
    """クリティック v とチーム平均報酬モデル λ のパラメータ組"""

    v: FloatArray
    lam: FloatArray

    @classmethod
    def zeros(cls, n_state_features: int, n_state_action_features: int) -> LinearParams:
        return cls(
            v=np.zeros(n_state_features, dtype=np.float64),
            lam=np.zeros(n_state_action_features, dtype=np.float64),
        )

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.lam)))


@dataclass(frozen=True)
class FeatureMap:
    """状態特徴 φ(s)（長さL）と状態行動特徴 f(s,a)（長さM）の組"""

    state_fn: StateFeatureFn
    state_action_fn: StateActionFeatureFn
    n_state_features: int
    n_state_action_features: int

    def phi(self, state: GlobalState) -> FloatArray:
        features = np.asarray(self.state_fn(state), dtype=np.float64)
        if features.shape != (self.n_state_features,):
            raise ResilientValidationError(
                "state feature has unexpected length",
                validation_type="dimension",
                invalid_value=features.shape,
                expected_format=f"({self.n_state_features},)",
            )
        return features

    def f(self, state: GlobalState, action: Sequence[int]) -> FloatArray:
        features = np.asarray(self.state_action_fn(state, action), dtype=np.float64)
        if features.shape != (self.n_state_action_features,):
            raise ResilientValidationError(
                "state-action feature has unexpected length",
                validation_type="dimension",
                invalid_value=features.shape,
                expected_format=f"({self.n_state_action_features},)",
            )
        return features

    def state_matrix(self, states: Sequence[GlobalState]) -> FloatArray:
        """列挙済み状態に対する特徴行列 Φ (|S|×L)"""
        return np.vstack([self.phi(s) for s in states])

    def state_action_matrix(self, mdp: TabularMMDP) -> FloatArray:
        """表形式MDPの全 (s,a) に対する特徴行列 F (|S||A|×M)、行は s·|A|+a の順"""
        rows = [
            self.f(s, tuple(int(k) for k in np.unravel_index(a, mdp.action_shape)))
            for s in range(mdp.n_states)
            for a in range(mdp.n_joint_actions)
        ]
        return np.vstack(rows)

    def check_rank(self, mdp: TabularMMDP) -> None:
        """Φ と F が列フルランクであることを検証する"""
        phi_matrix = self.state_matrix(list(range(mdp.n_states)))
        f_matrix = self.state_action_matrix(mdp)
        for name, matrix in (("state", phi_matrix), ("state-action", f_matrix)):
            rank = int(np.linalg.matrix_rank(matrix))
            if rank != matrix.shape[1]:
                raise ResilientValidationError(
                    f"{name} feature matrix is not full column rank",
                    validation_type="feature_rank",
                    invalid_value=rank,
                    expected_format=f"rank {matrix.shape[1]}",
                )

    @classmethod
    def from_matrices(
        cls,
        phi_matrix: FloatArray,
        f_matrix: FloatArray,
        action_shape: Sequence[int],
        *,
        check_rank: bool = True,
    ) -> FeatureMap:
        """表形式MDP用に行列で与えた特徴から FeatureMap を作る"""
        phi_matrix = np.atleast_2d(np.asarray(phi_matrix, dtype=np.float64))
        f_matrix = np.atleast_2d(np.asarray(f_matrix, dtype=np.float64))
        shape = tuple(int(a) for a in action_shape)
        n_joint = math.prod(shape)
        if f_matrix.shape[0] != phi_matrix.shape[0] * n_joint:
            raise ResilientValidationError(
                "state-action feature rows must equal |S|*|A|",
                validation_type="dimension",
                invalid_value=f_matrix.shape,
            )
        if check_rank:
            for name, matrix in (("state", phi_matrix), ("state-action", f_matrix)):
                if int(np.linalg.matrix_rank(matrix)) != matrix.shape[1]:
                    raise ResilientValidationError(
                        f"{name} feature matrix is not full column rank",
                        validation_type="feature_rank",
                        invalid_value=matrix.shape,
                    )

        def state_fn(state: GlobalState) -> FloatArray:
            return np.asarray(phi_matrix[int(state)])  # type: ignore[arg-type]

        def state_action_fn(state: GlobalState, action: Sequence[int]) -> FloatArray:
            joint = int(np.ravel_multi_index(tuple(action), shape))
            row = int(state) * n_joint + joint  # type: ignore[arg-type]
            return np.asarray(f_matrix[row])

        return cls(
            state_fn=state_fn,
            state_action_fn=state_action_fn,
            n_state_features=int(phi_matrix.shape[1]),
            n_state_action_features=int(f_matrix.shape[1]),
        )

    @classmethod
    def one_hot(cls, mdp: TabularMMDP) -> FeatureMap:
        """状態・状態行動の指示関数特徴（常に列フルランク）"""
        return cls.from_matrices(
            np.eye(mdp.n_states),
            np.eye(mdp.n_states * mdp.n_joint_actions),
            mdp.action_shape,
            check_rank=False,
        )


def example1_features() -> FeatureMap:
    """2状態チェーン用の特徴 φ(s)=f(s,a)=[1, s]"""
    basis = np.array([[1.0, 0.0], [1.0, 1.0]])
    return FeatureMap.from_matrices(basis, basis, (1, 1, 1))


def grid_features(spec: GridWorldSpec) -> FeatureMap:
    """グリッド用の線形特徴

    バイアスと各エージェント位置の指示関数。最終セルは基準として省く。
    """
    cells = grid_cells(spec.width, spec.height)
    index = {cell: k for k, cell in enumerate(cells)}
    n_cells = len(cells)
    n_moves = len(MOVES)
    state_block = n_cells - 1
    action_block = n_cells * n_moves - 1

    def state_fn(state: GlobalState) -> FloatArray:
        features = np.zeros(1 + spec.n_agents * state_block)
        features[0] = 1.0
        for i, cell in enumerate(state):  # type: ignore[arg-type]
            k = index[cell]
            if k < state_block:
                features[1 + i * state_block + k] = 1.0
        return features

    def state_action_fn(state: GlobalState, action: Sequence[int]) -> FloatArray:
        features = np.zeros(1 + spec.n_agents * action_block)
        features[0] = 1.0
        for i, (cell, a) in enumerate(zip(state, action)):  # type: ignore[arg-type]
            k = index[cell] * n_moves + int(a)
            if k < action_block:
                features[1 + i * action_block + k] = 1.0
        return features

    return FeatureMap(
        state_fn=state_fn,
        state_action_fn=state_action_fn,
        n_state_features=1 + spec.n_agents * state_block,
        n_state_action_features=1 + spec.n_agents * action_block,
    )


def critic_value(v: FloatArray, phi: FloatArray) -> float:
    _check_same_length(v, phi, "critic_value")
    return float(phi @ v)


def reward_value(lam: FloatArray, f: FloatArray) -> float:
    _check_same_length(lam, f, "reward_value")
    return float(f @ lam)


def local_td_error(
    reward: float, v: FloatArray, phi_t: FloatArray, phi_next: FloatArray, gamma: float
) -> float:
    """局所TD誤差 r + γV(s') − V(s)"""
    _check_same_length(phi_t, phi_next, "local_td_error")
    return float(reward + gamma * critic_value(v, phi_next) - critic_value(v, phi_t))


def local_reward_error(reward: float, lam: FloatArray, f_t: FloatArray) -> float:
    return float(reward - reward_value(lam, f_t))


def estimated_global_td(
    lam: FloatArray,
    v: FloatArray,
    f_t: FloatArray,
    phi_t: FloatArray,
    phi_next: FloatArray,
    gamma: float,
) -> float:
    """チーム平均報酬モデルを使った大域TD誤差の推定値"""
    return local_td_error(reward_value(lam, f_t), v, phi_t, phi_next, gamma)


def sgd_critic(
    v: FloatArray, alpha: float, delta: float, phi_t: FloatArray
) -> FloatArray:
    _check_same_length(v, phi_t, "sgd_critic")
    return np.asarray(v + alpha * delta * phi_t)


def sgd_reward(
    lam: FloatArray, alpha: float, delta: float, f_t: FloatArray
) -> FloatArray:
    _check_same_length(lam, f_t, "sgd_reward")
    return np.asarray(lam + alpha * delta * f_t)


@dataclass(frozen=True)
class SoftmaxPolicy:
    """箱型制約 [lo, hi] 付きの線形ソフトマックス方策

    ``score_fn(state)`` は (局所行動数 × K) のスコア特徴行列を返す。
    """

    theta: FloatArray
    score_fn: ScoreFn
    lo: FloatArray
    hi: FloatArray

    def __post_init__(self) -> None:
        if not (self.theta.shape == self.lo.shape == self.hi.shape):
            raise ResilientValidationError(
                "theta and bounds must share a shape",
                validation_type="dimension",
                invalid_value=(self.theta.shape, self.lo.shape, self.hi.shape),
            )
        if np.any(self.lo >= self.hi):
            raise ResilientValidationError(
                "policy bounds need lo < hi in every coordinate",
                validation_type="policy_bounds",
            )
        if np.any(self.theta < self.lo) or np.any(self.theta > self.hi):
            raise ResilientValidationError(
                "theta lies outside its bounds", validation_type="policy_bounds"
            )

    @classmethod
    def create(
        cls,
        score_fn: ScoreFn,
        dim: int,
        *,
        bound: float = DEFAULT_THETA_BOUND,
        theta: FloatArray | None = None,
    ) -> SoftmaxPolicy:
        initial = (
            np.zeros(dim) if theta is None else np.asarray(theta, dtype=np.float64)
        )
        return cls(
            theta=initial,
            score_fn=score_fn,
            lo=np.full(dim, -bound),
            hi=np.full(dim, bound),
        )

    def scores(self, state: GlobalState) -> FloatArray:
        matrix = np.asarray(self.score_fn(state), dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != self.theta.shape[0]:
            raise ResilientValidationError(
                "score features do not match theta",
                validation_type="dimension",
                invalid_value=matrix.shape,
            )
        return matrix

    @property
    def params(self) -> FloatArray:
        return self.theta

    def probs(self, state: GlobalState) -> FloatArray:
        return policy_probs(self, state)

    def log_grad(self, state: GlobalState, action: int) -> FloatArray:
        return log_policy_grad(self, state, action)

    def step(self, alpha: float, delta_hat: float, psi: FloatArray) -> SoftmaxPolicy:
        return actor_step(self, alpha, delta_hat, psi)

    def sample(self, state: GlobalState, rng: np.random.Generator) -> int:
        return sample_action(self, state, rng)


def policy_probs(policy: SoftmaxPolicy, state: GlobalState) -> FloatArray:
    logits = policy.scores(state) @ policy.theta
    shifted = np.exp(logits - np.max(logits))
    return np.asarray(shifted / shifted.sum())


def log_policy_grad(
    policy: SoftmaxPolicy, state: GlobalState, action: int
) -> FloatArray:
    """∇θ log π(a|s;θ) = x(s,a) − Σ_b π(b|s)x(s,b)"""
    features = policy.scores(state)
    if not 0 <= action < features.shape[0]:
        raise ResilientValidationError(
            f"local action {action} outside [0, {features.shape[0]})",
            validation_type="action_index",
            invalid_value=action,
        )
    logits = features @ policy.theta
    shifted = np.exp(logits - np.max(logits))
    probs = shifted / shifted.sum()
    return np.asarray(features[action] - probs @ features)


def actor_step(
    policy: SoftmaxPolicy, alpha: float, delta_hat: float, psi: FloatArray
) -> SoftmaxPolicy:
    """方策勾配ステップの後、箱 Θ へ座標毎に射影する"""
    _check_same_length(policy.theta, psi, "actor_step")
    theta = np.clip(policy.theta + alpha * delta_hat * psi, policy.lo, policy.hi)
    return replace(policy, theta=theta)


def sample_action(
    policy: SoftmaxPolicy, state: GlobalState, rng: np.random.Generator
) -> int:
    probs = policy_probs(policy, state)
    return int(rng.choice(probs.shape[0], p=probs))


def tabular_policy(
    n_states: int, n_actions: int, *, bound: float = DEFAULT_THETA_BOUND
) -> SoftmaxPolicy:
    """状態×局所行動の指示関数をスコア特徴に持つ方策"""

    def score_fn(state: GlobalState) -> FloatArray:
        s = int(state)  # type: ignore[arg-type]
        features = np.zeros((n_actions, n_states * n_actions))
        features[np.arange(n_actions), s * n_actions + np.arange(n_actions)] = 1.0
        return features

    return SoftmaxPolicy.create(score_fn, n_states * n_actions, bound=bound)


def grid_policy(
    spec: GridWorldSpec, agent_id: int, *, bound: float = DEFAULT_THETA_BOUND
) -> SoftmaxPolicy:
    """自分のセル×自分の行動の指示関数をスコア特徴に持つグリッド用方策"""
    index = {cell: k for k, cell in enumerate(grid_cells(spec.width, spec.height))}
    n_moves = len(MOVES)
    dim = len(index) * n_moves

    def score_fn(state: GlobalState) -> FloatArray:
        cell = state[agent_id]  # type: ignore[index]
        features = np.zeros((n_moves, dim))
        base = index[cell] * n_moves
        features[np.arange(n_moves), base + np.arange(n_moves)] = 1.0
        return features

    return SoftmaxPolicy.create(score_fn, dim, bound=bound)


def joint_policy_matrix(
    policies: Sequence[SoftmaxPolicy], mdp: TabularMMDP
) -> FloatArray:
    """積方策の結合行動確率表 π(a|s)（形状 |S|×|A|）"""
    if len(policies) != len(mdp.action_shape):
        raise ResilientValidationError(
            "need one policy per acting agent",
            validation_type="policy_count",
            invalid_value=len(policies),
        )
    table = np.empty((mdp.n_states, mdp.n_joint_actions))
    for s in range(mdp.n_states):
        joint = np.ones(())
        for policy in policies:
            joint = np.multiply.outer(joint, policy_probs(policy, s))
        table[s] = joint.ravel()
    return table


def closed_classes(transition: FloatArray) -> list[set[int]]:
    """遷移の台が作る有向グラフで、外へ出る辺を持たない強連結成分（再帰類）"""
    graph = nx.DiGraph()
    graph.add_nodes_from(range(transition.shape[0]))
    graph.add_edges_from(zip(*np.nonzero(transition > 0.0)))
    condensed = nx.condensation(graph)
    return [
        set(condensed.nodes[c]["members"])
        for c in condensed.nodes
        if condensed.out_degree(c) == 0
    ]


def stationary_distribution(
    transition: FloatArray,
    *,
    tolerance: float = STATIONARY_TOLERANCE,
    max_iter: int = STATIONARY_MAX_ITER,
) -> FloatArray:
    """状態0を初期分布としたべき乗法で定常分布を求める

    再帰類がちょうど1つ（定常分布が一意）でなければ数値エラーにする。
    """
    matrix = np.asarray(transition, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ResilientValidationError(
            "transition matrix must be square",
            validation_type="dimension",
            invalid_value=matrix.shape,
        )
    if np.max(np.abs(matrix.sum(axis=1) - 1.0)) > 1e-10:
        raise ResilientValidationError(
            "transition matrix must be row-stochastic",
            validation_type="row_stochastic",
        )

    closed = closed_classes(matrix)
    if len(closed) != 1:
        raise ResilientNumericError(
            "Stationary distribution is not unique (chain is reducible)",
            operation="stationary_distribution",
            suggestion=f"Chain has {len(closed)} closed classes; use a policy "
            "that connects them",
        )

    d = np.zeros(matrix.shape[0])
    d[0] = 1.0
    residual = math.inf
    for _ in range(max_iter):
        nxt = d @ matrix
        residual = float(np.max(np.abs(nxt - d)))
        d = nxt
        if residual <= tolerance:
            return np.asarray(d / d.sum())

    raise ResilientNumericError(
        "Power iteration did not converge (chain may be periodic)",
        operation="stationary_distribution",
        residual=residual,
        suggestion="Check that the chain is aperiodic",
    )


@dataclass(frozen=True)
class FixedPointOracle:
    """固定方策下で線形TD/報酬回帰の極限を閉形式で求めるための行列群"""

    phi: FloatArray
    f: FloatArray
    d_s: FloatArray
    d_sa: FloatArray
    p_pi: FloatArray
    rbar_pi: FloatArray
    rbar: FloatArray

    def __post_init__(self) -> None:
        for name, dist in (("d_s", self.d_s), ("d_sa", self.d_sa)):
            if np.any(dist < 0) or abs(float(dist.sum()) - 1.0) > 1e-9:
                raise ResilientValidationError(
                    f"{name} must be a probability vector",
                    validation_type="distribution",
                )
        if np.max(np.abs(self.p_pi.sum(axis=1) - 1.0)) > 1e-9:
            raise ResilientValidationError(
                "P_pi must be row-stochastic", validation_type="row_stochastic"
            )

    @classmethod
    def from_policy(
        cls,
        mdp: TabularMMDP,
        features: FeatureMap,
        joint_policy: FloatArray,
        agents: Sequence[int] | None = None,
    ) -> FixedPointOracle:
        """結合方策表からP_π・定常分布・チーム平均報酬を組み立てる"""
        pi = np.asarray(joint_policy, dtype=np.float64)
        if pi.shape != (mdp.n_states, mdp.n_joint_actions):
            raise ResilientValidationError(
                "joint policy must have shape (S, A)",
                validation_type="dimension",
                invalid_value=pi.shape,
            )
        p_pi = np.einsum("sa,sat->st", pi, mdp.transition)
        d_s = stationary_distribution(p_pi)
        d_sa = (d_s[:, None] * pi).ravel()
        rbar_table = mdp.team_average_reward(agents)
        return cls(
            phi=features.state_matrix(list(range(mdp.n_states))),
            f=features.state_action_matrix(mdp),
            d_s=d_s,
            d_sa=d_sa,
            p_pi=p_pi,
            rbar_pi=np.asarray((pi * rbar_table).sum(axis=1)),
            rbar=np.asarray(rbar_table.ravel()),
        )


def _solve_normal_system(
    matrix: FloatArray, rhs: FloatArray, operation: str, tolerance: float
) -> FloatArray:
    if np.linalg.cond(matrix) > CONDITION_LIMIT:
        raise ResilientNumericError(
            "Fixed-point system is singular",
            operation=operation,
            suggestion="Check feature rank and that every state is visited",
        )
    try:
        solution = np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError as e:
        raise ResilientNumericError(
            f"Fixed-point solve failed: {e!s}", operation=operation
        ) from e
    residual = float(np.max(np.abs(matrix @ solution - rhs)))
    if residual > tolerance * max(1.0, float(np.max(np.abs(rhs)))):
        raise ResilientNumericError(
            "Fixed-point residual exceeds tolerance",
            operation=operation,
            residual=residual,
        )
    return np.asarray(solution)


def solve_critic_fixed_point(
    oracle: FixedPointOracle, gamma: float, *, tolerance: float = FIXED_POINT_TOLERANCE
) -> FloatArray:
    """Φᵀ D_s (R̄_π + γP_πΦv − Φv) = 0 を解く"""
    if not 0.0 <= gamma < 1.0:
        raise ResilientValidationError(
            "gamma must lie in [0, 1)", validation_type="discount", invalid_value=gamma
        )
    weighted = oracle.phi.T * oracle.d_s
    matrix = weighted @ (oracle.phi - gamma * oracle.p_pi @ oracle.phi)
    rhs = weighted @ oracle.rbar_pi
    return _solve_normal_system(matrix, rhs, "solve_critic_fixed_point", tolerance)


def solve_reward_fixed_point(
    oracle: FixedPointOracle, *, tolerance: float = FIXED_POINT_TOLERANCE
) -> FloatArray:
    """Fᵀ D_sa (R̄ − Fλ) = 0 を解く（重み付き最小二乗）"""
    weighted = oracle.f.T * oracle.d_sa
    matrix = weighted @ oracle.f
    rhs = weighted @ oracle.rbar
    return _solve_normal_system(matrix, rhs, "solve_reward_fixed_point", tolerance)


AggregationMode = Literal["projection", "parameter_average", "trimmed_mean"]


@dataclass(frozen=True)
class LinearEstimator:
    """線形近似器 x ↦ xᵀw と、その合意更新（射影・単純平均・要素毎トリム平均）"""

    size: int
    aggregation: AggregationMode = "projection"

    def value(self, params: FloatArray, x: FloatArray) -> float:
        return critic_value(params, x)

    def gradient(self, params: FloatArray, x: FloatArray) -> FloatArray:
        _check_same_length(params, x, "gradient")
        return x

    def sgd(
        self, params: FloatArray, alpha: float, delta: float, x: FloatArray
    ) -> FloatArray:
        return sgd_critic(params, alpha, delta, x)

    def sgd_batch(
        self,
        params: FloatArray,
        alpha: float,
        deltas: Sequence[float],
        inputs: Sequence[FloatArray],
    ) -> FloatArray:
        """バッチ平均勾配による1ステップ（1サンプルなら ``sgd`` と同一）"""
        if len(inputs) == 1:
            return self.sgd(params, alpha, deltas[0], inputs[0])
        direction = np.mean([d * x for d, x in zip(deltas, inputs)], axis=0)
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
        """受信メッセージ（自分の送信分を含む）から次のパラメータを求める"""
        if self.aggregation == "parameter_average":
            return np.asarray(np.mean([received[j] for j in sorted(received)], axis=0))
        if self.aggregation == "trimmed_mean":
            ordered = [received[j] for j in sorted(received)]
            return elementwise_trimmed_mean(ordered, trim)

        if len(inputs) == 1:
            x = inputs[0]
            try:
                errors = {
                    j: project_error(message, own, x, alpha)
                    for j, message in received.items()
                }
            except DegenerateFeatureError as e:
                log_degenerate_step(own_id, channel, e.details.get("feature_norm", 0.0))
                return own.copy()
            eps = resilient_error(errors, own_id, trim, monitor, channel)
            return consensus_apply(own, alpha, eps, x)

        # バッチ平均のメッセージはサンプル毎の誤差へ分解してから合意する
        active = [x for x in inputs if float(x @ x) > 0.0]
        for _ in range(len(inputs) - len(active)):
            log_degenerate_step(own_id, channel)
        if not active:
            return own.copy()
        features = np.stack(active)
        senders = sorted(received)
        differences = np.stack([features @ (received[j] - own) for j in senders])
        estimates = batch_project_errors(
            differences, features @ features.T, alpha, len(inputs)
        )
        direction = np.zeros_like(own)
        for b, x in enumerate(active):
            errors = {j: float(estimates[k, b]) for k, j in enumerate(senders)}
            direction += resilient_error(errors, own_id, trim, monitor, channel) * x
        return np.asarray(own + alpha * direction / len(inputs))
