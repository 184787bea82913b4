"""ネットワーク化MMDP（表形式MDPとグリッドワールド協調ナビゲーション）"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Protocol, Sequence, Union

import numpy as np
import yaml

from .exceptions import (
    ResilientCapacityError,
    ResilientFileError,
    ResilientValidationError,
)
from .logging_config import get_logger

if TYPE_CHECKING:
    from .types import Cell, FloatArray, GlobalState, GridState

ROW_SUM_TOLERANCE = 1e-12
DEFAULT_STATE_CAP = 10**6

STAY, NORTH, SOUTH, EAST, WEST = range(5)
ACTION_NAMES = ("stay", "north", "south", "east", "west")
# 北はy座標を減らす（行番号が上へ向かう）
MOVES: tuple[Cell, ...] = ((0, 0), (0, -1), (0, 1), (1, 0), (-1, 0))

logger = get_logger(__name__)


@dataclass(frozen=True)
class StepOutcome:
    """1ステップ遷移の結果（次状態とエージェント毎の報酬）"""

    next_state: GlobalState
    rewards: FloatArray


@dataclass(frozen=True)
class TabularMMDP:
    """表形式のネットワーク化MMDP

    ``transition`` は形状 (S, A, S) の p(s'|s,a)、``rewards`` は形状
    (N, S, A) の r^i(s,a)。結合行動 a は各エージェントの局所行動を
    ``action_shape`` に従って row-major で平坦化したインデックス。
    """

    transition: FloatArray
    rewards: FloatArray
    discount: float
    action_shape: tuple[int, ...]

    def __post_init__(self) -> None:
        transition = np.asarray(self.transition, dtype=np.float64)
        rewards = np.asarray(self.rewards, dtype=np.float64)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "rewards", rewards)
        shape = tuple(int(a) for a in self.action_shape)
        object.__setattr__(self, "action_shape", shape)

        if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
            raise ResilientValidationError(
                "transition must have shape (S, A, S)",
                validation_type="transition_shape",
                invalid_value=transition.shape,
            )
        n_states, n_joint, _ = transition.shape
        if n_states < 1:
            raise ResilientValidationError(
                "MMDP needs at least one state", validation_type="n_states"
            )
        if math.prod(self.action_shape) != n_joint:
            raise ResilientValidationError(
                "action_shape does not match the joint action count",
                validation_type="action_shape",
                invalid_value=self.action_shape,
                expected_format=f"product equal to {n_joint}",
            )
        if np.any(transition < 0.0):
            raise ResilientValidationError(
                "transition probabilities must be non-negative",
                validation_type="transition_sign",
            )
        row_error = np.max(np.abs(transition.sum(axis=2) - 1.0))
        if row_error > ROW_SUM_TOLERANCE:
            raise ResilientValidationError(
                "every transition row p(.|s,a) must sum to 1",
                validation_type="row_stochastic",
                invalid_value=float(row_error),
            )
        if rewards.ndim != 3 or rewards.shape[1:] != (n_states, n_joint):
            raise ResilientValidationError(
                "rewards must have shape (N, S, A)",
                validation_type="reward_shape",
                invalid_value=rewards.shape,
            )
        if rewards.shape[0] < 1:
            raise ResilientValidationError(
                "MMDP needs at least one agent", validation_type="n_agents"
            )
        if not np.all(np.isfinite(rewards)):
            raise ResilientValidationError(
                "rewards must be finite", validation_type="reward_finite"
            )
        if not 0.0 <= self.discount < 1.0:
            raise ResilientValidationError(
                "discount must lie in [0, 1)",
                validation_type="discount",
                invalid_value=self.discount,
            )

    @property
    def n_states(self) -> int:
        return int(self.transition.shape[0])

    @property
    def n_joint_actions(self) -> int:
        return int(self.transition.shape[1])

    @property
    def n_agents(self) -> int:
        return int(self.rewards.shape[0])

    def joint_index(self, action: Sequence[int]) -> int:
        """局所行動の組を結合行動インデックスへ変換する"""
        if len(action) != len(self.action_shape):
            raise ResilientValidationError(
                "joint action length does not match action_shape",
                validation_type="joint_action",
                invalid_value=tuple(action),
            )
        for a, size in zip(action, self.action_shape):
            if not 0 <= a < size:
                raise ResilientValidationError(
                    f"local action {a} outside [0, {size})",
                    validation_type="action_index",
                    invalid_value=a,
                )
        return int(np.ravel_multi_index(tuple(action), self.action_shape))

    def team_average_reward(self, agents: Sequence[int] | None = None) -> FloatArray:
        """指定エージェント（既定は全員）の平均報酬表 r̄(s,a) を返す"""
        selected = self.rewards if agents is None else self.rewards[list(agents)]
        return np.asarray(selected.mean(axis=0))


def tabular_step(
    mdp: TabularMMDP,
    state: int,
    action: Sequence[int],
    rng: np.random.Generator,
) -> StepOutcome:
    """p(.|s,a) から次状態を引き、報酬表からエージェント毎の報酬を読む"""
    if not 0 <= state < mdp.n_states:
        raise ResilientValidationError(
            f"state {state} outside [0, {mdp.n_states})",
            validation_type="state_index",
            invalid_value=state,
        )
    joint = mdp.joint_index(action)
    next_state = int(rng.choice(mdp.n_states, p=mdp.transition[state, joint]))
    rewards = mdp.rewards[:, state, joint].copy()
    return StepOutcome(next_state=next_state, rewards=rewards)


def example1_mdp(p: float) -> TabularMMDP:
    """状態0へ確率p・状態1へ確率1-pで遷移する2状態チェーン（報酬 r^i(s)=i-4s）"""
    if not 0.0 <= p <= 1.0:
        raise ResilientValidationError(
            "p must be a probability", validation_type="probability", invalid_value=p
        )
    transition = np.zeros((2, 1, 2))
    transition[:, 0, 0] = p
    transition[:, 0, 1] = 1.0 - p
    rewards = np.array(
        [[[float(i - 4 * s)] for s in range(2)] for i in (1, 2, 3)],
        dtype=np.float64,
    )
    return TabularMMDP(
        transition=transition,
        rewards=rewards,
        discount=0.9,
        action_shape=(1, 1, 1),
    )


def random_tabular_mdp(
    n_states: int,
    action_shape: Sequence[int],
    n_agents: int,
    seed: int,
    discount: float = 0.9,
) -> TabularMMDP:
    """全遷移確率が正（既約かつ非周期）なランダム表形式MMDPを生成する"""
    rng = np.random.default_rng(seed)
    n_joint = math.prod(action_shape)
    transition = rng.uniform(0.05, 1.0, size=(n_states, n_joint, n_states))
    transition /= transition.sum(axis=2, keepdims=True)
    rewards = rng.uniform(-1.0, 1.0, size=(n_agents, n_states, n_joint))
    return TabularMMDP(
        transition=transition,
        rewards=rewards,
        discount=discount,
        action_shape=tuple(action_shape),
    )


def load_tabular_mdp(path: str | Path) -> tuple[TabularMMDP, FloatArray | None]:
    """YAML/JSONで書かれたMDPファイルを読み込み、任意の結合方策表も返す

    キー: ``transition[s][a][s']``, ``rewards[i][s][a]``, ``action_shape``,
    ``discount``（省略時0.9）, ``policy[s][a]``（省略可）。
    """
    file_path = Path(path)
    try:
        text = file_path.read_text(encoding="utf-8")
    except OSError as e:
        raise ResilientFileError(
            f"Cannot read MDP file: {e!s}",
            file_path=str(file_path),
            operation="read",
            suggestion="Check that the MDP file exists and is readable",
        ) from e

    data: Any = (
        json.loads(text) if file_path.suffix == ".json" else yaml.safe_load(text)
    )
    if not isinstance(data, dict):
        raise ResilientValidationError(
            "MDP file must contain a mapping",
            validation_type="mdp_file",
            invalid_value=str(file_path),
        )
    missing = {"transition", "rewards"} - set(data)
    if missing:
        raise ResilientValidationError(
            f"MDP file is missing keys: {sorted(missing)}",
            validation_type="mdp_file",
            expected_format="transition, rewards, action_shape, discount, policy",
        )

    transition = np.asarray(data["transition"], dtype=np.float64)
    action_shape = tuple(data.get("action_shape", [transition.shape[1]]))
    mdp = TabularMMDP(
        transition=transition,
        rewards=np.asarray(data["rewards"], dtype=np.float64),
        discount=float(data.get("discount", 0.9)),
        action_shape=action_shape,
    )
    policy = data.get("policy")
    return mdp, None if policy is None else np.asarray(policy, dtype=np.float64)


@dataclass(frozen=True)
class GridWorldSpec:
    """協調ナビゲーション用グリッドワールドの定義"""

    width: int
    height: int
    n_agents: int
    targets: tuple[Cell, ...]
    initial_positions: tuple[Cell, ...]
    episode_len: int = 20
    collision_penalty: float = 1.0

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ResilientValidationError(
                "grid dimensions must be positive",
                validation_type="grid_size",
                invalid_value=(self.width, self.height),
            )
        if not 1 <= self.n_agents <= self.width * self.height:
            raise ResilientValidationError(
                "n_agents must lie in [1, width*height]",
                validation_type="n_agents",
                invalid_value=self.n_agents,
            )
        if self.collision_penalty < 0:
            raise ResilientValidationError(
                "collision_penalty must be non-negative",
                validation_type="collision_penalty",
                invalid_value=self.collision_penalty,
            )
        for name, cells in (
            ("targets", self.targets),
            ("initial_positions", self.initial_positions),
        ):
            if len(cells) != self.n_agents:
                raise ResilientValidationError(
                    f"{name} needs one cell per agent",
                    validation_type=name,
                    invalid_value=len(cells),
                )
            for cell in cells:
                if not self.contains(cell):
                    raise ResilientValidationError(
                        f"{name} cell {cell} lies outside the grid",
                        validation_type=name,
                        invalid_value=cell,
                    )

    @classmethod
    def random(
        cls,
        width: int = 6,
        height: int = 6,
        n_agents: int = 5,
        *,
        episode_len: int = 20,
        collision_penalty: float = 1.0,
        seed: int = 0,
    ) -> GridWorldSpec:
        """固定シードで初期位置と目標位置をそれぞれ非復元抽出して生成する"""
        if not 1 <= n_agents <= width * height:
            raise ResilientValidationError(
                "n_agents must lie in [1, width*height]",
                validation_type="n_agents",
                invalid_value=n_agents,
            )
        rng = np.random.default_rng(seed)
        cells = grid_cells(width, height)
        starts = rng.choice(len(cells), size=n_agents, replace=False)
        goals = rng.choice(len(cells), size=n_agents, replace=False)
        return cls(
            width=width,
            height=height,
            n_agents=n_agents,
            targets=tuple(cells[int(k)] for k in goals),
            initial_positions=tuple(cells[int(k)] for k in starts),
            episode_len=episode_len,
            collision_penalty=collision_penalty,
        )

    def contains(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    @property
    def action_shape(self) -> tuple[int, ...]:
        return (len(MOVES),) * self.n_agents


def grid_cells(width: int, height: int) -> list[Cell]:
    """row-major順（yが外側、xが内側）のセル一覧"""
    return [(x, y) for y in range(height) for x in range(width)]


def grid_step(
    spec: GridWorldSpec, state: GridState, action: Sequence[int]
) -> StepOutcome:
    """全エージェントを同時に1マス動かし、距離と衝突のペナルティを返す"""
    if len(state) != spec.n_agents or not all(spec.contains(c) for c in state):
        raise ResilientValidationError(
            "state is not valid for this grid",
            validation_type="grid_state",
            invalid_value=state,
        )
    if len(action) != spec.n_agents:
        raise ResilientValidationError(
            "joint action needs one entry per agent",
            validation_type="joint_action",
            invalid_value=tuple(action),
        )

    positions: list[Cell] = []
    for (x, y), a in zip(state, action):
        if not 0 <= a < len(MOVES):
            raise ResilientValidationError(
                f"invalid grid action index {a}",
                validation_type="action_index",
                invalid_value=a,
                expected_format="0..4 (stay, north, south, east, west)",
            )
        dx, dy = MOVES[a]
        moved = (x + dx, y + dy)
        # 盤外への移動はその場に留まる
        positions.append(moved if spec.contains(moved) else (x, y))

    rewards = np.empty(spec.n_agents, dtype=np.float64)
    for i, (cell, target) in enumerate(zip(positions, spec.targets)):
        distance = abs(cell[0] - target[0]) + abs(cell[1] - target[1])
        collided = any(positions[j] == cell for j in range(spec.n_agents) if j != i)
        rewards[i] = -distance - spec.collision_penalty * float(collided)

    return StepOutcome(next_state=tuple(positions), rewards=rewards)


def enumerate_states(
    model: GridWorldSpec | TabularMMDP, cap: int = DEFAULT_STATE_CAP
) -> list[GlobalState]:
    """状態空間を決定的な順序で列挙する（グリッドは各エージェントのrow-major直積）"""
    if isinstance(model, TabularMMDP):
        count = model.n_states
        if count > cap:
            raise ResilientCapacityError(
                "state space exceeds enumeration cap", limit=cap, requested=count
            )
        return list(range(count))

    cells = grid_cells(model.width, model.height)
    count = len(cells) ** model.n_agents
    if count > cap:
        raise ResilientCapacityError(
            "state space exceeds enumeration cap", limit=cap, requested=count
        )
    return [tuple(combo) for combo in itertools.product(cells, repeat=model.n_agents)]


class Environment(Protocol):
    """ハーネスが扱う環境の共通インターフェース"""

    n_agents: int
    episode_len: int
    action_shape: tuple[int, ...]

    def reset(self) -> GlobalState: ...

    def step(
        self, state: GlobalState, action: Sequence[int], rng: np.random.Generator
    ) -> StepOutcome: ...


@dataclass
class GridWorld:
    """エピソード毎に固定初期位置へ戻るグリッドワールド環境"""

    spec: GridWorldSpec

    @property
    def n_agents(self) -> int:
        return self.spec.n_agents

    @property
    def episode_len(self) -> int:
        return self.spec.episode_len

    @property
    def action_shape(self) -> tuple[int, ...]:
        return self.spec.action_shape

    def reset(self) -> GridState:
        return self.spec.initial_positions

    def step(
        self, state: GlobalState, action: Sequence[int], rng: np.random.Generator
    ) -> StepOutcome:
        if isinstance(state, int):
            raise ResilientValidationError(
                "grid world expects per-agent cells", validation_type="grid_state"
            )
        return grid_step(self.spec, state, action)


@dataclass
class TabularEnv:
    """表形式MMDPをエピソード環境として扱うラッパー"""

    mdp: TabularMMDP
    episode_len: int = 20
    initial_state: int = 0
    n_agents: int = field(init=False)

    def __post_init__(self) -> None:
        self.n_agents = len(self.mdp.action_shape)
        if self.mdp.n_agents != self.n_agents:
            logger.debug(
                "Reward tables and acting agents differ",
                extra={
                    "context": {
                        "reward_agents": self.mdp.n_agents,
                        "acting_agents": self.n_agents,
                    }
                },
            )

    @property
    def action_shape(self) -> tuple[int, ...]:
        return self.mdp.action_shape

    def reset(self) -> int:
        return self.initial_state

    def step(
        self, state: GlobalState, action: Sequence[int], rng: np.random.Generator
    ) -> StepOutcome:
        if not isinstance(state, int):
            raise ResilientValidationError(
                "tabular environment expects a state index",
                validation_type="state_index",
            )
        return tabular_step(self.mdp, state, action, rng)


EnvironmentLike = Union[GridWorld, TabularEnv]
