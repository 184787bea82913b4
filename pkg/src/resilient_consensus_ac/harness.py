"""学習ループ・推定ベンチマーク・方策評価・CSV出力・複数シード実行"""

from __future__ import annotations

import csv
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Literal, cast

import numpy as np

from .agents import (
    Agent,
    CooperativeAgent,
    CustomAdversary,
    FaultyAdversary,
    GreedyAdversary,
    Message,
    Models,
    StepSizes,
    StrategicAdversary,
    Transition,
    check_message,
    log_agent_roster,
)
from .consensus import (
    ROBUSTNESS_NODE_CAP,
    CommGraph,
    ContainmentMonitor,
    disagreement_norm,
    is_zeta_robust,
)
from .deep import (
    Encoders,
    MlpEstimator,
    MlpPolicy,
    grid_encoders,
    hidden_layers,
    tabular_encoders,
)
from .exceptions import (
    ResilientConfigError,
    ResilientFileError,
    ResilientValidationError,
)
from .linear import (
    FeatureMap,
    LinearEstimator,
    example1_features,
    grid_features,
    grid_policy,
    local_reward_error,
    reward_value,
    sgd_reward,
    tabular_policy,
)
from .logging_config import (
    create_performance_context,
    get_context_logger,
    get_logger,
    log_with_context,
)
from .mlp import Mlp, save_checkpoint
from .mmdp import (
    GridWorld,
    GridWorldSpec,
    TabularEnv,
    example1_mdp,
    load_tabular_mdp,
    random_tabular_mdp,
    tabular_step,
)
from .utils import ensure_directory, format_float, resolve_callable, timed

if TYPE_CHECKING:
    from .agents import Actor
    from .config import TrainConfig
    from .linear import AggregationMode
    from .mmdp import EnvironmentLike
    from .types import FloatArray, GlobalState

TRAINING_COLUMNS = (
    "episode",
    "agent_id",
    "return",
    "disagreement_v",
    "disagreement_lambda",
)
EVALUATION_COLUMNS = ("episode", "mean_team_return", "stddev")
EXAMPLE1_COLUMNS = ("step", "agent_id", "rhat_s0", "rhat_s1")
SWEEP_COLUMNS = ("episode", "mean_team_return", "stddev", "n_seeds")
EXAMPLE1_PAYLOAD = (5.0, -10.0)
ACTOR_SEED_OFFSET = 101

TableName = Literal["training", "evaluation", "example1"]

logger = get_logger(__name__)


@dataclass
class RunMetrics:
    """学習・評価・推定ベンチマークの記録"""

    training: list[tuple[int, int, float, float, float]] = field(default_factory=list)
    evaluation: list[tuple[int, float, float]] = field(default_factory=list)
    example1: list[tuple[int, int, float, float]] = field(default_factory=list)
    round_disagreement: list[tuple[int, float, float]] = field(default_factory=list)
    containment_checks: int = 0
    containment_violations: int = 0
    stopped_early_at: int | None = None
    final_estimates: dict[int, tuple[FloatArray, FloatArray]] = field(
        default_factory=dict
    )

    def team_returns(self, agents: Sequence[int]) -> list[float]:
        """エピソード毎の指定エージェントの平均リターン"""
        selected = set(agents)
        by_episode: dict[int, list[float]] = {}
        for episode, agent_id, ret, _, _ in self.training:
            if agent_id in selected:
                by_episode.setdefault(episode, []).append(ret)
        return [float(np.mean(by_episode[e])) for e in sorted(by_episode)]


def build_environment(config: TrainConfig) -> EnvironmentLike:
    """設定から環境を作る"""
    env_cfg = config.environment
    if env_cfg.kind == "grid":
        if env_cfg.targets is not None and env_cfg.initial_positions is not None:
            spec = GridWorldSpec(
                width=env_cfg.width,
                height=env_cfg.height,
                n_agents=env_cfg.n_agents,
                targets=env_cfg.targets,
                initial_positions=env_cfg.initial_positions,
                episode_len=config.steps_per_episode,
                collision_penalty=env_cfg.collision_penalty,
            )
        else:
            spec = GridWorldSpec.random(
                env_cfg.width,
                env_cfg.height,
                env_cfg.n_agents,
                episode_len=config.steps_per_episode,
                collision_penalty=env_cfg.collision_penalty,
                seed=env_cfg.layout_seed,
            )
        return GridWorld(spec)

    if env_cfg.kind == "example1":
        mdp = example1_mdp(env_cfg.p)
    elif env_cfg.kind == "random_tabular":
        mdp = random_tabular_mdp(
            env_cfg.n_states,
            env_cfg.action_shape,
            len(env_cfg.action_shape),
            seed=env_cfg.mdp_seed,
            discount=config.gamma,
        )
    else:
        mdp, _ = load_tabular_mdp(env_cfg.mdp_file or "")
    if mdp.n_agents != len(mdp.action_shape):
        raise ResilientConfigError(
            "every acting agent needs its own reward table",
            config_key="environment",
            config_value=(mdp.n_agents, mdp.action_shape),
        )
    return TabularEnv(mdp, episode_len=config.steps_per_episode)


def build_graphs(config: TrainConfig, n_nodes: int) -> list[CommGraph]:
    """通信グラフ列（時変グラフは1ラウンド毎に巡回）"""
    kind = config.graph.kind
    if kind == "complete":
        return [CommGraph.complete(n_nodes)]
    if kind == "cycle":
        return [CommGraph.directed_cycle(n_nodes)]
    graphs = []
    for path in config.graph.paths:
        try:
            graphs.append(CommGraph.load_edge_list(path, n_nodes))
        except ResilientValidationError as e:
            if e.details.get("validation_type") != "graph_edge":
                raise
            raise ResilientConfigError(
                f"graph does not fit {n_nodes} agents: {e!s}",
                config_key="graph.paths",
                config_value=path,
                suggestion="Number agents from 0 in the edge list",
            ) from e
    return graphs


def check_graph_robustness(graphs: Sequence[CommGraph], trim: int) -> bool:
    """(2H+1)-ロバスト性を確認し、満たさない・検証不能な場合は警告する"""
    zeta = 2 * trim + 1
    certified = True
    for index, graph in enumerate(graphs):
        if graph.n_nodes < 2:
            continue
        if graph.n_nodes > ROBUSTNESS_NODE_CAP:
            logger.warning(
                "Graph too large for the exhaustive robustness check",
                extra={"context": {"graph_index": index, "n_nodes": graph.n_nodes}},
            )
            certified = False
        elif not is_zeta_robust(graph, zeta):
            logger.warning(
                f"Communication graph is not {zeta}-robust",
                extra={"context": {"graph_index": index, "trim": trim}},
            )
            certified = False
    return certified


@dataclass(frozen=True)
class ModelFactory:
    """エージェントのモデル・初期パラメータ・アクターを生成する"""

    models: Models
    initial_v: FloatArray
    initial_lam: FloatArray
    actors: tuple[Actor, ...]
    critic_mlp: Mlp | None = None
    reward_mlp: Mlp | None = None


def build_models(config: TrainConfig, env: EnvironmentLike) -> ModelFactory:
    """アルゴリズムに応じて線形またはMLPの近似器とアクターを用意する"""
    if config.algorithm == "alg3":
        return _build_deep_models(config, env)

    bound = config.policy_bound
    actors: tuple[Actor, ...]
    if isinstance(env, GridWorld):
        features = grid_features(env.spec)
        actors = tuple(
            grid_policy(env.spec, i, bound=bound) for i in range(env.n_agents)
        )
    else:
        features = (
            example1_features()
            if config.environment.kind == "example1"
            else FeatureMap.one_hot(env.mdp)
        )
        actors = tuple(
            tabular_policy(env.mdp.n_states, n_actions, bound=bound)
            for n_actions in env.action_shape
        )

    aggregation = cast("AggregationMode", config.aggregation)
    models = Models(
        critic=LinearEstimator(features.n_state_features, aggregation),
        reward=LinearEstimator(features.n_state_action_features, aggregation),
        critic_input=features.phi,
        reward_input=features.f,
        gamma=config.gamma,
    )
    return ModelFactory(
        models=models,
        initial_v=np.zeros(features.n_state_features),
        initial_lam=np.zeros(features.n_state_action_features),
        actors=actors,
    )


def _build_deep_models(config: TrainConfig, env: EnvironmentLike) -> ModelFactory:
    encoders: Encoders = (
        grid_encoders(env.spec)
        if isinstance(env, GridWorld)
        else tabular_encoders(env.mdp)
    )
    net = config.network
    hidden = hidden_layers(net.hidden_width, net.hidden_layers)
    critic_mlp = Mlp((encoders.state_size, *hidden, 1), net.slope, net.use_bias)
    reward_mlp = Mlp(
        (encoders.state_action_size, *hidden, 1), net.slope, net.use_bias
    )
    actors: list[Actor] = []
    for i, n_actions in enumerate(encoders.n_local_actions):
        actor_mlp = Mlp(
            (encoders.state_size, *hidden, n_actions), net.slope, net.use_bias
        )
        actors.append(
            MlpPolicy(
                mlp=actor_mlp,
                theta=actor_mlp.init_params(net.seed + ACTOR_SEED_OFFSET + i),
                encode=encoders.state,
                bound=config.policy_bound,
            )
        )
    return ModelFactory(
        models=Models(
            critic=MlpEstimator(critic_mlp),
            reward=MlpEstimator(reward_mlp),
            critic_input=encoders.state,
            reward_input=encoders.state_action,
            gamma=config.gamma,
        ),
        initial_v=critic_mlp.init_params(net.seed),
        initial_lam=reward_mlp.init_params(net.seed + 1),
        actors=tuple(actors),
        critic_mlp=critic_mlp,
        reward_mlp=reward_mlp,
    )


def _payload(
    values: Sequence[float] | None, default: FloatArray, name: str
) -> FloatArray:
    if values is None:
        return default.copy()
    payload = np.asarray(values, dtype=np.float64)
    if payload.shape != default.shape:
        raise ResilientConfigError(
            f"faulty {name} payload has the wrong length",
            config_key=f"adversaries.payload_{name}",
            config_value=len(values),
            suggestion=f"Provide {default.shape[0]} values",
        )
    return payload


def build_agents(
    config: TrainConfig, factory: ModelFactory, n_agents: int
) -> list[Agent]:
    """設定の敵対ノード割り当てに従ってエージェントを並べる"""
    byzantine = {a.node: a for a in config.adversaries}
    cooperative_ids = tuple(i for i in range(n_agents) if i not in byzantine)
    agents: list[Agent] = []
    for i in range(n_agents):
        common: dict[str, Any] = {
            "agent_id": i,
            "models": factory.models,
            "actor": factory.actors[i],
            "v": factory.initial_v.copy(),
            "lam": factory.initial_lam.copy(),
        }
        settings = byzantine.get(i)
        if settings is None:
            agents.append(CooperativeAgent(**common))
        elif settings.kind == "greedy":
            agents.append(GreedyAdversary(**common))
        elif settings.kind == "faulty":
            payload = Message(
                i,
                _payload(settings.payload_v, factory.initial_v, "v"),
                _payload(settings.payload_lambda, factory.initial_lam, "lambda"),
            )
            agents.append(FaultyAdversary(**common, payload=payload))
        elif settings.kind == "strategic":
            agents.append(
                StrategicAdversary(**common, cooperative_ids=cooperative_ids)
            )
        else:
            hook = resolve_callable(settings.hook or "")
            agents.append(CustomAdversary(**common, hook=hook))
    return agents


def rollout_returns(
    env: EnvironmentLike,
    policies: Sequence[Actor],
    episodes: int,
    seed: int,
    discount: float | None = None,
) -> FloatArray:
    """固定方策でのロールアウトによるエピソード×エージェントのリターン行列"""
    if len(policies) != env.n_agents:
        raise ResilientValidationError(
            "need one policy per agent",
            validation_type="policy_count",
            invalid_value=len(policies),
        )
    rng = np.random.default_rng(seed)
    returns = np.zeros((episodes, env.n_agents))
    gamma = 1.0 if discount is None else discount
    for episode in range(episodes):
        state: GlobalState = env.reset()
        weight = 1.0
        for _ in range(env.episode_len):
            action = tuple(policy.sample(state, rng) for policy in policies)
            outcome = env.step(state, action, rng)
            returns[episode] += weight * outcome.rewards
            weight *= gamma
            state = outcome.next_state
    return returns


def evaluate_policy(
    env: EnvironmentLike,
    policies: Sequence[Actor],
    episodes: int,
    seed: int,
    discount: float | None = None,
) -> FloatArray:
    """エージェント毎の平均リターン（既定は割引なしのエピソード和）"""
    returns = rollout_returns(env, policies, episodes, seed, discount)
    return np.asarray(returns.mean(axis=0))


class Trainer:
    """1回の学習実行の状態と同期ラウンド処理"""

    def __init__(self, config: TrainConfig, out_dir: str | Path | None = None) -> None:
        self.config = config
        self.out_dir = None if out_dir is None else Path(out_dir)
        self.env = build_environment(config)
        n_agents = self.env.n_agents
        for adversary in config.adversaries:
            if not 0 <= adversary.node < n_agents:
                raise ResilientConfigError(
                    f"adversary node {adversary.node} is not in the node set",
                    config_key="adversaries.node",
                    config_value=adversary.node,
                )
        self.factory = build_models(config, self.env)
        self.agents = build_agents(config, self.factory, n_agents)
        self.cooperative_ids = tuple(
            a.agent_id for a in self.agents if a.is_cooperative
        )
        if not self.cooperative_ids:
            raise ResilientConfigError(
                "at least one cooperative agent is required", config_key="adversaries"
            )
        self.graphs = build_graphs(config, n_agents)
        self.robust = check_graph_robustness(self.graphs, config.trim)
        self.monitor = ContainmentMonitor(cooperative=frozenset(self.cooperative_ids))
        self.rng = np.random.default_rng(config.seed)
        self.attack_rng = np.random.default_rng([config.seed, 1])
        self.round_index = 0
        self.metrics = RunMetrics()
        self.logger = get_context_logger(__name__, seed=config.seed)

    def step_sizes(self, round_index: int, actor_index: int) -> StepSizes:
        steps = self.config.steps
        return StepSizes(
            critic=steps.critic(round_index),
            reward=steps.reward(round_index),
            actor=steps.actor(actor_index),
        )

    def step_environment(self, state: GlobalState) -> Transition:
        action = tuple(agent.act(state, self.rng) for agent in self.agents)
        outcome = self.env.step(state, action, self.rng)
        return Transition(state, action, outcome.rewards, outcome.next_state)

    def run_round(
        self,
        batch: Sequence[Transition],
        steps: StepSizes,
        *,
        update_actor: bool,
    ) -> None:
        """局所更新→同期メッセージ交換→合意更新 を1ラウンド行う"""
        for agent in self.agents:
            agent.local_phase(batch, steps, update_actor=update_actor)

        graph = self.graphs[self.round_index % len(self.graphs)]
        v_size = self.factory.initial_v.shape[0]
        lam_size = self.factory.initial_lam.shape[0]
        inboxes: dict[int, dict[int, Message]] = {
            a.agent_id: {} for a in self.agents
        }
        for sender in self.agents:
            recipients = graph.out_neighbors(sender.agent_id)
            for recipient, message in sender.outgoing(
                recipients, self.round_index, self.attack_rng
            ).items():
                check_message(message, v_size, lam_size)
                inboxes[recipient][sender.agent_id] = message

        self.monitor.round_index = self.round_index
        for agent in self.agents:
            agent.consensus_phase(
                inboxes[agent.agent_id], batch, steps, self.config.trim, self.monitor
            )

        coop = [self.agents[i] for i in self.cooperative_ids]
        self.metrics.round_disagreement.append(
            (
                self.round_index,
                disagreement_norm([a.v for a in coop]),
                disagreement_norm([a.lam for a in coop]),
            )
        )
        self.round_index += 1

    def train_episode(self, episode: int) -> FloatArray:
        """1エピソード分の学習を行いエージェント毎のリターンを返す"""
        config = self.config
        state: GlobalState = self.env.reset()
        returns = np.zeros(len(self.agents))
        batch: list[Transition] = []
        for _ in range(config.steps_per_episode):
            transition = self.step_environment(state)
            returns += transition.rewards
            if config.update_mode == "online":
                steps = self.step_sizes(self.round_index, self.round_index)
                self.run_round([transition], steps, update_actor=True)
            else:
                batch.append(transition)
            state = transition.next_state

        if config.update_mode == "batch" and batch:
            for _ in range(config.epochs_per_episode):
                steps = self.step_sizes(self.round_index, episode)
                if config.consensus_per == "sample":
                    for transition in batch:
                        self.run_round([transition], steps, update_actor=False)
                else:
                    self.run_round(batch, steps, update_actor=False)
            actor_alpha = self.step_sizes(self.round_index, episode).actor
            for agent in self.agents:
                agent.actor_phase(batch, actor_alpha)
        return returns

    def evaluate(self, episode: int) -> None:
        returns = rollout_returns(
            self.env,
            [agent.actor for agent in self.agents],
            self.config.eval_episodes,
            seed=self.config.seed + 7919 * (episode + 1),
        )
        team = returns[:, list(self.cooperative_ids)].mean(axis=1)
        mean, stddev = float(team.mean()), float(team.std())
        self.metrics.evaluation.append((episode, mean, stddev))
        log_with_context(
            self.logger,
            "info",
            "Evaluation",
            episode=episode,
            mean_team_return=round(mean, 4),
            stddev=round(stddev, 4),
        )

    def should_stop(self, episode: int) -> bool:
        early = self.config.early_stop
        if not early.enabled or episode + 1 < 2 * early.window:
            return False
        team = self.metrics.team_returns(self.cooperative_ids)
        recent = float(np.mean(team[-early.window :]))
        previous = float(np.mean(team[-2 * early.window : -early.window]))
        if abs(recent - previous) > early.return_tol * max(1.0, abs(previous)):
            return False
        if not self.metrics.round_disagreement:
            return True
        _, dv, dl = self.metrics.round_disagreement[-1]
        return dv <= early.disagreement_tol and dl <= early.disagreement_tol

    def _record_episode(self, episode: int, returns: FloatArray) -> None:
        _, dv, dl = (
            self.metrics.round_disagreement[-1]
            if self.metrics.round_disagreement
            else (0, 0.0, 0.0)
        )
        for agent_id, ret in enumerate(returns):
            self.metrics.training.append((episode, agent_id, float(ret), dv, dl))

    def run(self) -> RunMetrics:
        config = self.config
        self.logger.info(
            "Training started",
            extra={
                "context": {
                    "algorithm": config.algorithm,
                    "episodes": config.episodes,
                    "trim": config.trim,
                    "seed": config.seed,
                }
            },
        )
        log_agent_roster(self.agents)

        with timed("training", algorithm=config.algorithm) as timing:
            for episode in range(config.episodes):
                self._record_episode(episode, self.train_episode(episode))
                if config.eval_every and (episode + 1) % config.eval_every == 0:
                    self.evaluate(episode)
                if self.should_stop(episode):
                    self.metrics.stopped_early_at = episode
                    log_with_context(self.logger, "info", "Early stop", episode=episode)
                    break

        self.metrics.containment_checks = self.monitor.checks
        self.metrics.containment_violations = len(self.monitor.violations)
        self.metrics.final_estimates = {
            a.agent_id: (a.v.copy(), a.lam.copy()) for a in self.agents
        }
        if config.algorithm == "alg3" and config.network.checkpoint and self.out_dir:
            self.write_checkpoints()

        self.logger.info(
            "Training finished",
            extra={
                "context": {
                    "episodes_run": len({row[0] for row in self.metrics.training}),
                    "rounds": self.round_index,
                    "containment_violations": self.metrics.containment_violations,
                    **create_performance_context(
                        round(timing["execution_time_ms"], 1)
                    ),
                }
            },
        )
        return self.metrics

    def write_checkpoints(self) -> None:
        assert self.out_dir is not None  # nosec B101
        directory = self.out_dir / "checkpoints"
        seed = self.config.network.seed
        for agent in self.agents:
            if self.factory.critic_mlp is not None:
                save_checkpoint(
                    directory / f"agent{agent.agent_id}_critic.bin",
                    self.factory.critic_mlp,
                    agent.v,
                    seed,
                )
            if self.factory.reward_mlp is not None:
                save_checkpoint(
                    directory / f"agent{agent.agent_id}_reward.bin",
                    self.factory.reward_mlp,
                    agent.lam,
                    seed,
                )
            actor = agent.actor
            if isinstance(actor, MlpPolicy):
                save_checkpoint(
                    directory / f"agent{agent.agent_id}_actor.bin",
                    actor.mlp,
                    actor.theta,
                    seed,
                )


def run_training(config: TrainConfig, out_dir: str | Path | None = None) -> RunMetrics:
    """設定に従って学習を実行し、記録を返す（同一設定・シードで決定的）"""
    return Trainer(config, out_dir).run()


def run_example1(
    p: float = 0.5,
    alpha: float = 0.05,
    method: Literal["projection", "trimmed_mean"] = "projection",
    trim: int = 1,
    steps: int = 20_000,
    seed: int = 0,
    *,
    adversary: bool = True,
    payload: Sequence[float] = EXAMPLE1_PAYLOAD,
) -> RunMetrics:
    """2状態チェーンでチーム平均報酬モデルだけを推定する

    K4上で1ノードが定数パラメータを送り続ける。
    """
    if not 0.0 < p < 1.0:
        raise ResilientValidationError(
            "p must lie in (0, 1)", validation_type="probability", invalid_value=p
        )
    if method not in ("projection", "trimmed_mean"):
        raise ResilientValidationError(
            f"unknown estimation method: {method}",
            validation_type="method",
            invalid_value=method,
            expected_format="projection or trimmed_mean",
        )
    mdp = example1_mdp(p)
    features = example1_features()
    cooperative = (0, 1, 2)
    byzantine = 3
    graph = CommGraph.complete(4 if adversary else 3)
    estimator = LinearEstimator(features.n_state_action_features, method)
    monitor = ContainmentMonitor(cooperative=frozenset(cooperative))
    constant = np.asarray(payload, dtype=np.float64)
    action = (0, 0, 0)
    f_states = [features.f(s, action) for s in range(mdp.n_states)]

    rng = np.random.default_rng(seed)
    lam = {i: np.zeros(features.n_state_action_features) for i in cooperative}
    metrics = RunMetrics()
    state = 0
    for step in range(steps):
        outcome = tabular_step(mdp, state, action, rng)
        f_t = f_states[state]
        messages = {
            i: sgd_reward(
                lam[i],
                alpha,
                local_reward_error(float(outcome.rewards[i]), lam[i], f_t),
                f_t,
            )
            for i in cooperative
        }
        if adversary:
            messages[byzantine] = constant
        monitor.round_index = step
        lam = {
            i: estimator.consensus_update(
                i,
                lam[i],
                {j: messages[j] for j in graph.in_neighbors(i)},
                [f_t],
                alpha,
                trim,
                monitor if method == "projection" else None,
                "lambda",
            )
            for i in cooperative
        }
        for i in cooperative:
            metrics.example1.append(
                (
                    step,
                    i,
                    reward_value(lam[i], f_states[0]),
                    reward_value(lam[i], f_states[1]),
                )
            )
        state = int(outcome.next_state)  # type: ignore[arg-type]

    metrics.containment_checks = monitor.checks
    metrics.containment_violations = len(monitor.violations)
    metrics.final_estimates = {i: (np.zeros(0), lam[i]) for i in cooperative}
    return metrics


def _table(
    metrics: RunMetrics, table: TableName
) -> tuple[tuple[str, ...], list[tuple[float, ...]]]:
    if table == "training":
        return TRAINING_COLUMNS, list(metrics.training)
    if table == "evaluation":
        return EVALUATION_COLUMNS, list(metrics.evaluation)
    if table == "example1":
        return EXAMPLE1_COLUMNS, list(metrics.example1)
    raise ResilientValidationError(
        f"unknown metrics table: {table}",
        validation_type="table",
        invalid_value=table,
        expected_format="training, evaluation or example1",
    )


def _cell(value: float) -> str | int:
    if isinstance(value, (int, np.integer)):
        return int(value)
    return format_float(value)


def _write_rows(
    path: str | Path, columns: Sequence[str], rows: Sequence[Sequence[float]]
) -> Path:
    file_path = Path(path)
    try:
        ensure_directory(file_path.parent)
        with file_path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
    except OSError as e:
        raise ResilientFileError(
            f"Cannot write CSV: {e!s}",
            file_path=str(file_path),
            operation="write",
            suggestion="Check that the output directory is writable",
        ) from e
    return file_path


def export_csv(
    metrics: RunMetrics, path: str | Path, table: TableName = "training"
) -> Path:
    """指定した表をヘッダー付きUTF-8 CSVとして書き出す（浮動小数点は17桁）"""
    columns, rows = _table(metrics, table)
    return _write_rows(path, columns, rows)


def export_all(metrics: RunMetrics, out_dir: str | Path) -> list[Path]:
    """学習・評価（と推定ベンチマークがあればその）表をまとめて書き出す"""
    directory = Path(out_dir)
    written = [
        export_csv(metrics, directory / "training.csv", "training"),
        export_csv(metrics, directory / "evaluation.csv", "evaluation"),
    ]
    if metrics.example1:
        written.append(export_csv(metrics, directory / "example1.csv", "example1"))
    return written


def summarize_sweep(
    results: Sequence[RunMetrics],
) -> list[tuple[int, float, float, int]]:
    """シード間で評価リターンの平均と標準偏差をエピソード毎にまとめる"""
    by_episode: dict[int, list[float]] = {}
    for metrics in results:
        for episode, mean, _ in metrics.evaluation:
            by_episode.setdefault(episode, []).append(mean)
    return [
        (episode, float(np.mean(values)), float(np.std(values)), len(values))
        for episode, values in sorted(by_episode.items())
    ]


def run_sweep(
    config: TrainConfig,
    seeds: Sequence[int],
    out_dir: str | Path,
    workers: int = 1,
) -> list[tuple[int, float, float, int]]:
    """複数シードを独立に実行し、シード毎の出力と集計CSVを書き出す"""
    directory = Path(out_dir)
    ensure_directory(directory)

    def run_one(seed: int) -> RunMetrics:
        seed_dir = directory / f"seed_{seed}"
        metrics = run_training(config.with_seed(seed), seed_dir)
        export_all(metrics, seed_dir)
        return metrics

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(run_one, seeds))
    else:
        results = [run_one(seed) for seed in seeds]

    summary = summarize_sweep(results)
    _write_rows(directory / "sweep.csv", SWEEP_COLUMNS, summary)
    logger.info(
        "Sweep finished",
        extra={"context": {"seeds": len(seeds), "workers": workers}},
    )
    return summary
