from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml
from mkdocs.config import base
from mkdocs.config import config_options as c

from .exceptions import ResilientConfigError, ResilientFileError
from .logging_config import get_logger
from .schedules import StepSchedule, check_two_timescale

ALGORITHMS = ("alg1", "alg2", "alg3")
ADVERSARY_KINDS = ("greedy", "faulty", "strategic", "custom")
ENVIRONMENT_KINDS = ("grid", "example1", "random_tabular", "tabular")
AGGREGATIONS = ("projection", "parameter_average", "trimmed_mean")
UNKNOWN_KEY_MARKER = "Unrecognised configuration name"

logger = get_logger(__name__)


class RealNumber(c.OptionallyRequired[float]):
    """整数表記も受け付ける実数オプション（範囲チェック付き）"""

    def __init__(
        self,
        default: float | None = None,
        *,
        minimum: float | None = None,
        maximum: float | None = None,
        exclusive_minimum: bool = False,
        exclusive_maximum: bool = False,
        required: bool | None = None,
    ) -> None:
        super().__init__(default=default, required=required)
        self.minimum = minimum
        self.maximum = maximum
        self.exclusive_minimum = exclusive_minimum
        self.exclusive_maximum = exclusive_maximum

    def run_validation(self, value: object) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise base.ValidationError(
                f"Expected a number but received: {type(value).__name__}"
            )
        number = float(value)
        if self.minimum is not None and (
            number < self.minimum or (self.exclusive_minimum and number == self.minimum)
        ):
            bound = ">" if self.exclusive_minimum else ">="
            raise base.ValidationError(f"Expected a value {bound} {self.minimum}")
        if self.maximum is not None and (
            number > self.maximum or (self.exclusive_maximum and number == self.maximum)
        ):
            bound = "<" if self.exclusive_maximum else "<="
            raise base.ValidationError(f"Expected a value {bound} {self.maximum}")
        return number


class EnvironmentSection(base.Config):
    kind = c.Choice(ENVIRONMENT_KINDS, default="grid")
    width = c.Type(int, default=6)
    height = c.Type(int, default=6)
    n_agents = c.Type(int, default=5)
    episode_len = c.Type(int, default=20)
    collision_penalty = RealNumber(default=1.0, minimum=0.0)
    layout_seed = c.Type(int, default=0)
    targets = c.Optional(c.Type(list))
    initial_positions = c.Optional(c.Type(list))
    p = RealNumber(default=0.5, minimum=0.0, maximum=1.0)
    n_states = c.Type(int, default=5)
    action_shape = c.Type(list, default=[2, 2])
    mdp_seed = c.Type(int, default=0)
    mdp_file = c.Optional(c.Type(str))


class GraphSection(base.Config):
    kind = c.Choice(("complete", "cycle", "edge_list"), default="complete")
    paths = c.ListOfItems(c.Type(str), default=[])


class ScheduleSection(base.Config):
    kind = c.Choice(("constant", "diminishing"), default="constant")
    a = RealNumber(default=0.01, minimum=0.0, exclusive_minimum=True)
    b = RealNumber(default=1.0, minimum=0.0, exclusive_minimum=True)
    p = RealNumber(default=1.0)


class ActorScheduleSection(ScheduleSection):
    a = RealNumber(default=0.002, minimum=0.0, exclusive_minimum=True)


class StepsSection(base.Config):
    critic = c.SubConfig(ScheduleSection)
    reward = c.SubConfig(ScheduleSection)
    actor = c.SubConfig(ActorScheduleSection)


class AdversarySection(base.Config):
    node = c.Type(int)
    kind = c.Choice(ADVERSARY_KINDS, default="faulty")
    payload_v = c.Optional(c.Type(list))
    payload_lambda = c.Optional(c.Type(list))
    hook = c.Optional(c.Type(str))


class NetworkSection(base.Config):
    hidden_width = c.Type(int, default=30)
    hidden_layers = c.Type(int, default=2)
    slope = RealNumber(default=0.01, minimum=0.0)
    use_bias = c.Type(bool, default=True)
    seed = c.Type(int, default=0)
    checkpoint = c.Type(bool, default=False)


class EarlyStopSection(base.Config):
    enabled = c.Type(bool, default=False)
    window = c.Type(int, default=100)
    disagreement_tol = RealNumber(default=1e-3, minimum=0.0)
    return_tol = RealNumber(default=1e-2, minimum=0.0)


@dataclass(frozen=True)
class EnvironmentSettings:
    kind: str = "grid"
    width: int = 6
    height: int = 6
    n_agents: int = 5
    episode_len: int = 20
    collision_penalty: float = 1.0
    layout_seed: int = 0
    targets: tuple[tuple[int, int], ...] | None = None
    initial_positions: tuple[tuple[int, int], ...] | None = None
    p: float = 0.5
    n_states: int = 5
    action_shape: tuple[int, ...] = (2, 2)
    mdp_seed: int = 0
    mdp_file: str | None = None


@dataclass(frozen=True)
class GraphSettings:
    kind: str = "complete"
    paths: tuple[str, ...] = ()


@dataclass(frozen=True)
class AdversarySettings:
    node: int
    kind: str = "faulty"
    payload_v: tuple[float, ...] | None = None
    payload_lambda: tuple[float, ...] | None = None
    hook: str | None = None


@dataclass(frozen=True)
class NetworkSettings:
    hidden_width: int = 30
    hidden_layers: int = 2
    slope: float = 0.01
    use_bias: bool = True
    seed: int = 0
    checkpoint: bool = False


@dataclass(frozen=True)
class EarlyStopSettings:
    enabled: bool = False
    window: int = 100
    disagreement_tol: float = 1e-3
    return_tol: float = 1e-2


@dataclass(frozen=True)
class StepSettings:
    critic: StepSchedule = field(default_factory=lambda: StepSchedule(a=0.01))
    reward: StepSchedule = field(default_factory=lambda: StepSchedule(a=0.01))
    actor: StepSchedule = field(default_factory=lambda: StepSchedule(a=0.002))


@dataclass(frozen=True)
class TrainConfig:
    """検証済みの学習設定"""

    algorithm: str = "alg2"
    seed: int = 0
    episodes: int = 100
    steps_per_episode: int = 20
    epochs_per_episode: int = 20
    eval_every: int = 100
    eval_episodes: int = 10
    update_mode: str = "online"
    consensus_per: str = "epoch"
    gamma: float = 0.9
    trim: int = 0
    aggregation: str = "projection"
    policy_bound: float = 50.0
    log_level: str = "INFO"
    environment: EnvironmentSettings = field(default_factory=EnvironmentSettings)
    graph: GraphSettings = field(default_factory=GraphSettings)
    steps: StepSettings = field(default_factory=StepSettings)
    adversaries: tuple[AdversarySettings, ...] = ()
    network: NetworkSettings = field(default_factory=NetworkSettings)
    early_stop: EarlyStopSettings = field(default_factory=EarlyStopSettings)

    def with_seed(self, seed: int) -> TrainConfig:
        return replace(self, seed=seed)

    @property
    def byzantine_nodes(self) -> frozenset[int]:
        return frozenset(a.node for a in self.adversaries)


class ConfigManager:
    """学習設定スキーマの定義と検証を担う"""

    @staticmethod
    def get_config_scheme() -> tuple[tuple[str, Any], ...]:
        """YAMLトップレベルの設定スキーマを定義する"""
        return (
            ("algorithm", c.Choice(ALGORITHMS, default="alg2")),
            ("seed", c.Type(int, default=0)),
            ("episodes", c.Type(int, default=100)),
            ("steps_per_episode", c.Optional(c.Type(int))),
            ("epochs_per_episode", c.Type(int, default=20)),
            ("eval_every", c.Type(int, default=100)),
            ("eval_episodes", c.Type(int, default=10)),
            ("update_mode", c.Optional(c.Choice(("online", "batch")))),
            ("consensus_per", c.Choice(("sample", "epoch"), default="epoch")),
            ("gamma", RealNumber(default=0.9)),
            ("trim", c.Type(int, default=0)),
            ("aggregation", c.Choice(AGGREGATIONS, default="projection")),
            (
                "policy_bound",
                RealNumber(default=50.0, minimum=0.0, exclusive_minimum=True),
            ),
            (
                "log_level",
                c.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], default="INFO"),
            ),
            ("environment", c.SubConfig(EnvironmentSection)),
            ("graph", c.SubConfig(GraphSection)),
            ("steps", c.SubConfig(StepsSection)),
            ("adversaries", c.ListOfItems(c.SubConfig(AdversarySection), default=[])),
            ("network", c.SubConfig(NetworkSection)),
            ("early_stop", c.SubConfig(EarlyStopSection)),
        )

    @staticmethod
    def load_file(path: str | Path) -> TrainConfig:
        """UTF-8のYAML設定ファイルを読み込んで検証する"""
        file_path = Path(path)
        try:
            text = file_path.read_text(encoding="utf-8")
        except OSError as e:
            raise ResilientFileError(
                f"Cannot read config file: {e!s}",
                file_path=str(file_path),
                operation="read",
                suggestion="Check the --config path",
            ) from e
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ResilientConfigError(
                f"Config file is not valid YAML: {e!s}",
                config_value=str(file_path),
            ) from e
        return ConfigManager.from_dict(data or {})

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> TrainConfig:
        """辞書からスキーマ検証と相互検証を経て ``TrainConfig`` を作る"""
        if not isinstance(data, Mapping):
            raise ResilientConfigError(
                "Configuration must be a mapping",
                config_value=type(data).__name__,
            )
        config = base.LegacyConfig(ConfigManager.get_config_scheme())
        config.load_dict(dict(data))
        failed, warnings = config.validate()

        for key, error in failed:
            raise ResilientConfigError(
                f"Invalid configuration '{key}': {error}",
                config_key=key,
                config_value=data.get(key),
            )
        for key, message in warnings:
            if UNKNOWN_KEY_MARKER in str(message):
                raise ResilientConfigError(
                    f"Unknown configuration key in '{key}': {message}",
                    config_key=key,
                    suggestion="Remove the key or check its spelling",
                )
            logger.warning(f"Config warning for '{key}': {message}")

        values = dict(config)
        ConfigManager.validate_config(values)
        return ConfigManager._build(values)

    @staticmethod
    def validate_config(config: dict[str, Any]) -> bool:
        """フィールド間の整合性を検証し、問題があれば例外を投げる"""
        checks: list[tuple[str, bool, str]] = [
            ("trim", config.get("trim", 0) >= 0, "H must be non-negative"),
            ("episodes", config.get("episodes", 0) >= 0, "episodes must be >= 0"),
            (
                "epochs_per_episode",
                config.get("epochs_per_episode", 1) >= 1,
                "epochs_per_episode must be >= 1",
            ),
            ("eval_every", config.get("eval_every", 0) >= 0, "eval_every must be >= 0"),
            (
                "eval_episodes",
                config.get("eval_episodes", 1) >= 1,
                "eval_episodes must be >= 1",
            ),
            (
                "gamma",
                0.0 <= config.get("gamma", 0.9) < 1.0,
                "gamma must lie in [0, 1)",
            ),
        ]
        steps_per_episode = config.get("steps_per_episode")
        if steps_per_episode is not None:
            checks.append(
                ("steps_per_episode", steps_per_episode >= 1, "must be >= 1")
            )
        for key, ok, message in checks:
            if not ok:
                raise ResilientConfigError(
                    message, config_key=key, config_value=config.get(key)
                )

        environment = config.get("environment") or {}
        n_agents = ConfigManager._declared_agents(environment)
        if environment.get("kind") == "tabular" and not environment.get("mdp_file"):
            raise ResilientConfigError(
                "tabular environment needs mdp_file",
                config_key="environment.mdp_file",
            )

        seen: set[int] = set()
        for adversary in config.get("adversaries") or []:
            node = adversary.get("node")
            if node is None:
                raise ResilientConfigError(
                    "adversary entry needs a node id", config_key="adversaries.node"
                )
            if n_agents is not None and not 0 <= node < n_agents:
                raise ResilientConfigError(
                    f"adversary node {node} is not in the node set",
                    config_key="adversaries.node",
                    config_value=node,
                    suggestion=f"Use node ids in [0, {n_agents})",
                )
            if node in seen:
                raise ResilientConfigError(
                    f"adversary node {node} listed twice",
                    config_key="adversaries.node",
                    config_value=node,
                )
            seen.add(node)
            if adversary.get("kind") == "custom" and not adversary.get("hook"):
                raise ResilientConfigError(
                    "custom adversaries need a hook ('module:function')",
                    config_key="adversaries.hook",
                )
        if n_agents is not None and len(seen) >= n_agents:
            raise ResilientConfigError(
                "at least one cooperative agent is required",
                config_key="adversaries",
            )

        algorithm = config.get("algorithm", "alg2")
        aggregation = config.get("aggregation", "projection")
        if algorithm == "alg3" and aggregation != "projection":
            raise ResilientConfigError(
                "alg3 always uses hidden trimmed mean plus output projection",
                config_key="aggregation",
                config_value=aggregation,
                suggestion="Remove 'aggregation' or use alg1/alg2",
            )

        graph = config.get("graph") or {}
        if graph.get("kind") == "edge_list" and not graph.get("paths"):
            raise ResilientConfigError(
                "edge_list graphs need at least one path",
                config_key="graph.paths",
            )

        steps = config.get("steps") or {}
        if steps:
            schedules = {
                name: ConfigManager._schedule(steps[name], f"steps.{name}")
                for name in ("critic", "reward", "actor")
            }
            check_two_timescale(
                schedules["actor"], schedules["critic"], schedules["reward"]
            )
        return True

    @staticmethod
    def _declared_agents(environment: Mapping[str, Any]) -> int | None:
        kind = environment.get("kind", "grid")
        if kind == "grid":
            return int(environment.get("n_agents", 5))
        if kind == "example1":
            return 3
        if kind == "random_tabular":
            return len(environment.get("action_shape") or [])
        return None

    @staticmethod
    def _schedule(section: Mapping[str, Any], key: str) -> StepSchedule:
        try:
            return StepSchedule(
                kind=section.get("kind", "constant"),
                a=float(section.get("a", 0.01)),
                b=float(section.get("b", 1.0)),
                p=float(section.get("p", 1.0)),
            )
        except ResilientConfigError as e:
            raise ResilientConfigError(
                str(e),
                config_key=f"{key}.{e.details.get('config_key', '')}".rstrip("."),
                config_value=e.details.get("config_value"),
                suggestion=e.details.get("suggestion"),
            ) from e

    @staticmethod
    def _cells(raw: Any, key: str) -> tuple[tuple[int, int], ...] | None:
        if raw is None:
            return None
        try:
            return tuple((int(cell[0]), int(cell[1])) for cell in raw)
        except (TypeError, ValueError, IndexError) as e:
            raise ResilientConfigError(
                "cells must be [x, y] pairs", config_key=key, config_value=raw
            ) from e

    @staticmethod
    def _build(values: Mapping[str, Any]) -> TrainConfig:
        env = values["environment"]
        environment = EnvironmentSettings(
            kind=env["kind"],
            width=env["width"],
            height=env["height"],
            n_agents=env["n_agents"],
            episode_len=env["episode_len"],
            collision_penalty=env["collision_penalty"],
            layout_seed=env["layout_seed"],
            targets=ConfigManager._cells(env["targets"], "environment.targets"),
            initial_positions=ConfigManager._cells(
                env["initial_positions"], "environment.initial_positions"
            ),
            p=env["p"],
            n_states=env["n_states"],
            action_shape=tuple(int(a) for a in env["action_shape"]),
            mdp_seed=env["mdp_seed"],
            mdp_file=env["mdp_file"],
        )
        steps = values["steps"]
        algorithm = values["algorithm"]
        update_mode = values["update_mode"] or (
            "batch" if algorithm == "alg3" else "online"
        )
        trim = values["trim"]
        if algorithm == "alg1" and trim > 0:
            logger.warning(
                "alg1 does not trim; H is forced to 0",
                extra={"context": {"configured_trim": trim}},
            )
            trim = 0

        network = values["network"]
        early = values["early_stop"]
        return TrainConfig(
            algorithm=algorithm,
            seed=values["seed"],
            episodes=values["episodes"],
            steps_per_episode=values["steps_per_episode"] or environment.episode_len,
            epochs_per_episode=values["epochs_per_episode"],
            eval_every=values["eval_every"],
            eval_episodes=values["eval_episodes"],
            update_mode=update_mode,
            consensus_per=values["consensus_per"],
            gamma=values["gamma"],
            trim=trim,
            aggregation=values["aggregation"],
            policy_bound=values["policy_bound"],
            log_level=values["log_level"],
            environment=environment,
            graph=GraphSettings(
                kind=values["graph"]["kind"], paths=tuple(values["graph"]["paths"])
            ),
            steps=StepSettings(
                critic=ConfigManager._schedule(steps["critic"], "steps.critic"),
                reward=ConfigManager._schedule(steps["reward"], "steps.reward"),
                actor=ConfigManager._schedule(steps["actor"], "steps.actor"),
            ),
            adversaries=tuple(
                AdversarySettings(
                    node=a["node"],
                    kind=a["kind"],
                    payload_v=None
                    if a["payload_v"] is None
                    else tuple(float(x) for x in a["payload_v"]),
                    payload_lambda=None
                    if a["payload_lambda"] is None
                    else tuple(float(x) for x in a["payload_lambda"]),
                    hook=a["hook"],
                )
                for a in values["adversaries"]
            ),
            network=NetworkSettings(
                hidden_width=network["hidden_width"],
                hidden_layers=network["hidden_layers"],
                slope=network["slope"],
                use_bias=network["use_bias"],
                seed=network["seed"],
                checkpoint=network["checkpoint"],
            ),
            early_stop=EarlyStopSettings(
                enabled=early["enabled"],
                window=early["window"],
                disagreement_tol=early["disagreement_tol"],
                return_tol=early["return_tol"],
            ),
        )
