"""エージェントの更新手順（協調エージェントとビザンチン型の各振る舞い）"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, ClassVar, Protocol, Union

import numpy as np

from .deep import deep_consensus_round
from .exceptions import ResilientValidationError
from .logging_config import get_logger

if TYPE_CHECKING:
    from .consensus import ContainmentMonitor
    from .types import FloatArray, GlobalState, JointAction

logger = get_logger(__name__)


class Estimator(Protocol):
    """パラメータベクトル上の近似器と、その合意更新"""

    @property
    def size(self) -> int: ...

    def value(self, params: FloatArray, x: FloatArray) -> float: ...

    def gradient(self, params: FloatArray, x: FloatArray) -> FloatArray: ...

    def sgd(
        self, params: FloatArray, alpha: float, delta: float, x: FloatArray
    ) -> FloatArray: ...

    def sgd_batch(
        self,
        params: FloatArray,
        alpha: float,
        deltas: Sequence[float],
        inputs: Sequence[FloatArray],
    ) -> FloatArray: ...

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
    ) -> FloatArray: ...


class Actor(Protocol):
    """局所方策（ソフトマックス線形方策またはMLP方策）"""

    @property
    def params(self) -> FloatArray: ...

    def probs(self, state: GlobalState) -> FloatArray: ...

    def log_grad(self, state: GlobalState, action: int) -> FloatArray: ...

    def step(self, alpha: float, delta_hat: float, psi: FloatArray) -> Actor: ...

    def sample(self, state: GlobalState, rng: np.random.Generator) -> int: ...


@dataclass(frozen=True)
class Message:
    """送信者IDと送信パラメータ (ṽ, λ̃)。深層版では平坦化したパラメータ"""

    sender: int
    v: FloatArray
    lam: FloatArray


@dataclass(frozen=True)
class Transition:
    """1ステップ分の遷移（報酬は全エージェント分）"""

    state: GlobalState
    action: JointAction
    rewards: FloatArray
    next_state: GlobalState


@dataclass(frozen=True)
class StepSizes:
    critic: float
    reward: float
    actor: float


@dataclass(frozen=True)
class Models:
    """クリティック・報酬モデルの近似器と入力変換、割引率"""

    critic: Estimator
    reward: Estimator
    critic_input: Callable[[GlobalState], FloatArray]
    reward_input: Callable[[GlobalState, Sequence[int]], FloatArray]
    gamma: float

    def td_error(self, reward: float, v: FloatArray, transition: Transition) -> float:
        """r + γV(s';v) − V(s;v)"""
        return float(
            reward
            + self.gamma
            * self.critic.value(v, self.critic_input(transition.next_state))
            - self.critic.value(v, self.critic_input(transition.state))
        )

    def reward_error(
        self, reward: float, lam: FloatArray, transition: Transition
    ) -> float:
        x = self.reward_input(transition.state, transition.action)
        return float(reward - self.reward.value(lam, x))

    def team_td(self, v: FloatArray, lam: FloatArray, transition: Transition) -> float:
        """チーム平均報酬モデルによる大域TD誤差の推定値"""
        x = self.reward_input(transition.state, transition.action)
        return self.td_error(self.reward.value(lam, x), v, transition)

    def local_sgd(
        self,
        v: FloatArray,
        lam: FloatArray,
        rewards: Sequence[float],
        batch: Sequence[Transition],
        steps: StepSizes,
    ) -> tuple[FloatArray, FloatArray]:
        """報酬列に対するクリティック・報酬モデルの局所SGD（送信用 ṽ, λ̃）"""
        delta_v = [self.td_error(r, v, tr) for r, tr in zip(rewards, batch)]
        delta_lam = [self.reward_error(r, lam, tr) for r, tr in zip(rewards, batch)]
        v_tilde = self.critic.sgd_batch(
            v, steps.critic, delta_v, [self.critic_input(tr.state) for tr in batch]
        )
        lam_tilde = self.reward.sgd_batch(
            lam,
            steps.reward,
            delta_lam,
            [self.reward_input(tr.state, tr.action) for tr in batch],
        )
        return v_tilde, lam_tilde


@dataclass(frozen=True)
class RoundContext:
    """カスタム攻撃フックへ渡す1ラウンドの情報"""

    round_index: int
    sender: int
    recipients: tuple[int, ...]
    honest: Message
    batch: tuple[Transition, ...]
    rng: np.random.Generator


AttackHook = Callable[[RoundContext], Union[Message, Mapping[int, Message]]]


@dataclass
class Agent:
    """全エージェント共通の状態（アクター・クリティック・報酬モデル）"""

    agent_id: int
    models: Models
    actor: Actor
    v: FloatArray
    lam: FloatArray

    is_cooperative: ClassVar[bool] = False
    kind: ClassVar[str] = "agent"

    def act(self, state: GlobalState, rng: np.random.Generator) -> int:
        return self.actor.sample(state, rng)

    def actor_td(self, transition: Transition) -> float:
        """アクター更新に使うTD誤差"""
        return self.models.td_error(
            float(transition.rewards[self.agent_id]), self.v, transition
        )

    def actor_phase(self, batch: Sequence[Transition], alpha: float) -> None:
        """バッチ平均の方策勾配でアクターを1回更新する"""
        if not batch:
            return
        deltas = [self.actor_td(tr) for tr in batch]
        psis = [
            self.actor.log_grad(tr.state, int(tr.action[self.agent_id]))
            for tr in batch
        ]
        if len(batch) == 1:
            self.actor = self.actor.step(alpha, deltas[0], psis[0])
            return
        direction = np.mean([d * psi for d, psi in zip(deltas, psis)], axis=0)
        self.actor = self.actor.step(alpha, 1.0, direction)

    def local_phase(
        self,
        batch: Sequence[Transition],
        steps: StepSizes,
        *,
        update_actor: bool = True,
    ) -> None:
        raise NotImplementedError

    def outgoing(
        self, recipients: Sequence[int], round_index: int, rng: np.random.Generator
    ) -> dict[int, Message]:
        raise NotImplementedError

    def consensus_phase(
        self,
        inbox: Mapping[int, Message],
        batch: Sequence[Transition],
        steps: StepSizes,
        trim: int,
        monitor: ContainmentMonitor | None = None,
    ) -> None:
        """既定では受信箱を無視する"""


@dataclass
class CooperativeAgent(Agent):
    """射影型（トリミング付き）合意で (v, λ) を更新する協調エージェント"""

    pending: Message | None = field(default=None, init=False)

    is_cooperative: ClassVar[bool] = True
    kind: ClassVar[str] = "cooperative"

    def actor_td(self, transition: Transition) -> float:
        return self.models.team_td(self.v, self.lam, transition)

    def local_phase(
        self,
        batch: Sequence[Transition],
        steps: StepSizes,
        *,
        update_actor: bool = True,
    ) -> None:
        # アクターは前ラウンドの (v, λ) で先に更新する
        if update_actor:
            self.actor_phase(batch, steps.actor)
        rewards = [float(tr.rewards[self.agent_id]) for tr in batch]
        v_tilde, lam_tilde = self.models.local_sgd(
            self.v, self.lam, rewards, batch, steps
        )
        self.pending = Message(self.agent_id, v_tilde, lam_tilde)

    def outgoing(
        self, recipients: Sequence[int], round_index: int, rng: np.random.Generator
    ) -> dict[int, Message]:
        message = self._require_pending()
        return {j: message for j in recipients}

    def consensus_phase(
        self,
        inbox: Mapping[int, Message],
        batch: Sequence[Transition],
        steps: StepSizes,
        trim: int,
        monitor: ContainmentMonitor | None = None,
    ) -> None:
        """v と λ を独立に 射影→トリミング→集約→更新 する"""
        if self.agent_id not in inbox:
            raise ResilientValidationError(
                "inbox must contain the agent's own message",
                validation_type="inbox",
                invalid_value=sorted(inbox),
            )
        critic_inputs = [self.models.critic_input(tr.state) for tr in batch]
        reward_inputs = [self.models.reward_input(tr.state, tr.action) for tr in batch]
        self.v, self.lam = deep_consensus_round(
            self.models.critic,
            self.models.reward,
            self.agent_id,
            self.v,
            self.lam,
            {j: (m.v, m.lam) for j, m in inbox.items()},
            critic_inputs,
            reward_inputs,
            steps.critic,
            steps.reward,
            trim,
            monitor,
        )
        self.pending = None

    def _require_pending(self) -> Message:
        if self.pending is None:
            raise ResilientValidationError(
                "local phase must run before messages are sent",
                validation_type="round_order",
                invalid_value=self.agent_id,
            )
        return self.pending


@dataclass
class GreedyAdversary(Agent):
    """自分の報酬だけで正直にSGDし、その結果を送信し、受信は無視する"""

    pending: Message | None = field(default=None, init=False)

    kind: ClassVar[str] = "greedy"

    def step(
        self,
        batch: Sequence[Transition],
        steps: StepSizes,
        *,
        update_actor: bool = True,
    ) -> Message:
        """自分の報酬でアクターと (v, λ) を更新し、送信するメッセージを返す"""
        if update_actor:
            self.actor_phase(batch, steps.actor)
        rewards = [float(tr.rewards[self.agent_id]) for tr in batch]
        self.v, self.lam = self.models.local_sgd(
            self.v, self.lam, rewards, batch, steps
        )
        self.pending = Message(self.agent_id, self.v, self.lam)
        return self.pending

    def local_phase(
        self,
        batch: Sequence[Transition],
        steps: StepSizes,
        *,
        update_actor: bool = True,
    ) -> None:
        self.step(batch, steps, update_actor=update_actor)

    def outgoing(
        self, recipients: Sequence[int], round_index: int, rng: np.random.Generator
    ) -> dict[int, Message]:
        message = self.pending or Message(self.agent_id, self.v, self.lam)
        return {j: message for j in recipients}


@dataclass
class FaultyAdversary(Agent):
    """固定パラメータを送り続ける故障ノード

    クリティックは凍結し、アクターだけを自分の報酬で更新する。
    """

    payload: Message | None = None

    kind: ClassVar[str] = "faulty"

    def __post_init__(self) -> None:
        if self.payload is None:
            self.payload = Message(self.agent_id, self.v.copy(), self.lam.copy())
        payload = self.payload
        if payload.v.shape != self.v.shape or payload.lam.shape != self.lam.shape:
            raise ResilientValidationError(
                "faulty payload does not match the model dimensions",
                validation_type="payload",
                invalid_value=(self.payload.v.shape, self.payload.lam.shape),
            )

    def step(
        self,
        batch: Sequence[Transition],
        steps: StepSizes,
        *,
        update_actor: bool = True,
    ) -> Message:
        if update_actor:
            self.actor_phase(batch, steps.actor)
        return self.payload  # type: ignore[return-value]

    def local_phase(
        self,
        batch: Sequence[Transition],
        steps: StepSizes,
        *,
        update_actor: bool = True,
    ) -> None:
        self.step(batch, steps, update_actor=update_actor)

    def outgoing(
        self, recipients: Sequence[int], round_index: int, rng: np.random.Generator
    ) -> dict[int, Message]:
        return {j: self.payload for j in recipients}  # type: ignore[misc]


@dataclass
class StrategicAdversary(Agent):
    """協調報酬の符号反転平均で学習したモデルを送る戦略的な敵対ノード

    アクターは私的クリティックで学習する。

    ``v`` と ``lam`` が送信用モデル、``private_v`` がアクター用の私的クリティック。
    """

    cooperative_ids: tuple[int, ...] = ()
    private_v: FloatArray = field(init=False)

    kind: ClassVar[str] = "strategic"

    def __post_init__(self) -> None:
        if not self.cooperative_ids:
            raise ResilientValidationError(
                "strategic adversary needs the cooperative agent ids",
                validation_type="cooperative_ids",
            )
        self.private_v = self.v.copy()

    def actor_td(self, transition: Transition) -> float:
        return self.models.td_error(
            float(transition.rewards[self.agent_id]), self.private_v, transition
        )

    def hostile_reward(self, coop_rewards: Sequence[float]) -> float:
        return -float(np.mean(coop_rewards))

    def step(
        self,
        batch: Sequence[Transition],
        coop_rewards: Sequence[Sequence[float]],
        steps: StepSizes,
        *,
        update_actor: bool = True,
    ) -> Message:
        """私的クリティックと、符号反転した協調報酬による送信用モデルを更新する"""
        if update_actor:
            self.actor_phase(batch, steps.actor)
        own = [float(tr.rewards[self.agent_id]) for tr in batch]
        deltas = [
            self.models.td_error(r, self.private_v, tr) for r, tr in zip(own, batch)
        ]
        self.private_v = self.models.critic.sgd_batch(
            self.private_v,
            steps.critic,
            deltas,
            [self.models.critic_input(tr.state) for tr in batch],
        )
        hostile = [self.hostile_reward(r) for r in coop_rewards]
        self.v, self.lam = self.models.local_sgd(
            self.v, self.lam, hostile, batch, steps
        )
        return Message(self.agent_id, self.v, self.lam)

    def local_phase(
        self,
        batch: Sequence[Transition],
        steps: StepSizes,
        *,
        update_actor: bool = True,
    ) -> None:
        coop = [[float(tr.rewards[j]) for j in self.cooperative_ids] for tr in batch]
        self.step(batch, coop, steps, update_actor=update_actor)

    def outgoing(
        self, recipients: Sequence[int], round_index: int, rng: np.random.Generator
    ) -> dict[int, Message]:
        message = Message(self.agent_id, self.v, self.lam)
        return {j: message for j in recipients}


@dataclass
class CustomAdversary(Agent):
    """利用者のフックが受信者毎のメッセージを決めるビザンチンエージェント

    局所学習は正直に行う。
    """

    hook: AttackHook | None = None
    last_batch: tuple[Transition, ...] = field(default=(), init=False)

    kind: ClassVar[str] = "custom"

    def __post_init__(self) -> None:
        if self.hook is None:
            raise ResilientValidationError(
                "custom adversary needs an attack hook", validation_type="hook"
            )

    def local_phase(
        self,
        batch: Sequence[Transition],
        steps: StepSizes,
        *,
        update_actor: bool = True,
    ) -> None:
        if update_actor:
            self.actor_phase(batch, steps.actor)
        rewards = [float(tr.rewards[self.agent_id]) for tr in batch]
        self.v, self.lam = self.models.local_sgd(
            self.v, self.lam, rewards, batch, steps
        )
        self.last_batch = tuple(batch)

    def attack(self, context: RoundContext) -> dict[int, Message]:
        """フックの戻り値を受信者毎のメッセージへ展開する"""
        produced: Any = self.hook(context)  # type: ignore[misc]
        if isinstance(produced, Message):
            return {j: produced for j in context.recipients}
        if not isinstance(produced, Mapping):
            raise ResilientValidationError(
                "attack hook must return a Message or a mapping of recipients",
                validation_type="hook_result",
                invalid_value=type(produced).__name__,
            )
        missing = set(context.recipients) - set(produced)
        if missing:
            raise ResilientValidationError(
                "attack hook left recipients without a message",
                validation_type="hook_result",
                invalid_value=sorted(missing),
            )
        return {j: produced[j] for j in context.recipients}

    def outgoing(
        self, recipients: Sequence[int], round_index: int, rng: np.random.Generator
    ) -> dict[int, Message]:
        context = RoundContext(
            round_index=round_index,
            sender=self.agent_id,
            recipients=tuple(recipients),
            honest=Message(self.agent_id, self.v, self.lam),
            batch=self.last_batch,
            rng=rng,
        )
        return self.attack(context)


def check_message(message: Message, v_size: int, lam_size: int) -> None:
    """配送時に送信パラメータの次元を検証する（内容そのものは制約しない）"""
    if np.shape(message.v) != (v_size,) or np.shape(message.lam) != (lam_size,):
        raise ResilientValidationError(
            "message dimensions do not match the shared model",
            validation_type="message_dimension",
            invalid_value=(message.sender, np.shape(message.v), np.shape(message.lam)),
            expected_format=f"v: ({v_size},), lam: ({lam_size},)",
        )


def constant_attack(v: FloatArray, lam: FloatArray) -> AttackHook:
    """毎ラウンド同じ定数パラメータを全受信者へ送るフック"""

    def hook(context: RoundContext) -> Message:
        return Message(
            context.sender,
            np.asarray(v, dtype=np.float64),
            np.asarray(lam, dtype=np.float64),
        )

    return hook


def honest_replay(context: RoundContext) -> Message:
    """正直に学習したパラメータをそのまま送るフック"""
    return context.honest


def log_agent_roster(agents: Sequence[Agent]) -> None:
    logger.info(
        "Agent roster",
        extra={
            "context": {
                "cooperative": [a.agent_id for a in agents if a.is_cooperative],
                "byzantine": {
                    a.agent_id: a.kind for a in agents if not a.is_cooperative
                },
            }
        },
    )
