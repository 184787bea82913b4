"""コマンドラインインターフェース"""

from __future__ import annotations

import json
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import TYPE_CHECKING

import click
import numpy as np

from . import __version__
from .config import ConfigManager
from .consensus import CommGraph, is_zeta_robust, max_robustness, node_connectivity
from .exceptions import (
    ResilientACError,
    ResilientCapacityError,
    ResilientConfigError,
    ResilientFileError,
    ResilientNumericError,
    ResilientValidationError,
)
from .harness import export_all, export_csv, run_example1, run_sweep, run_training
from .linear import (
    FeatureMap,
    FixedPointOracle,
    solve_critic_fixed_point,
    solve_reward_fixed_point,
)
from .logging_config import create_error_context, get_logger, setup_logging
from .mmdp import load_tabular_mdp

if TYPE_CHECKING:
    from .config import TrainConfig

EXIT_USAGE = 2
EXIT_NUMERIC = 3
METHODS = {"projection": "projection", "trimmed": "trimmed_mean"}

logger = get_logger(__name__)


@contextmanager
def _exit_codes(command: str) -> Iterator[None]:
    """ライブラリ例外を終了コードへ変換する"""
    try:
        yield
    except ResilientACError as e:
        context = {
            **create_error_context(
                error_type=type(e).__name__, processing_step=command
            ),
            **e.details,
        }
        logger.error(str(e), extra={"context": context})
        sys.exit(_exit_code(e))


def _exit_code(error: ResilientACError) -> int:
    if isinstance(error, ResilientNumericError):
        return EXIT_NUMERIC
    if isinstance(
        error,
        (
            ResilientConfigError,
            ResilientValidationError,
            ResilientCapacityError,
            ResilientFileError,
        ),
    ):
        return EXIT_USAGE
    return 1


def _load_config(path: str, seed: int | None) -> TrainConfig:
    config = ConfigManager.load_file(path)
    return config if seed is None else config.with_seed(seed)


@click.group()
@click.version_option(__version__, prog_name="resilient-ac")
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]),
    default="INFO",
    show_default=True,
)
@click.option("--log-file", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def main(ctx: click.Context, log_level: str, log_file: str | None) -> None:
    """Byzantine-resilient consensus actor-critic simulator."""
    ctx.obj = {"log_file": log_file}
    setup_logging(level=log_level, log_file=log_file, force=True)


def _use_config_logging(ctx: click.Context, config: TrainConfig) -> None:
    """設定ファイルの log_level でロガーを再設定する（ログファイル指定は維持）"""
    log_file = (ctx.obj or {}).get("log_file")
    setup_logging(level=config.log_level, log_file=log_file, force=True)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.pass_context
def train(
    ctx: click.Context, config_path: str, out_dir: str, seed: int | None
) -> None:
    """Run alg1/alg2/alg3 training and write CSV metrics."""
    with _exit_codes("train"):
        config = _load_config(config_path, seed)
        _use_config_logging(ctx, config)
        metrics = run_training(config, out_dir)
        for path in export_all(metrics, out_dir):
            click.echo(str(path))


@main.command()
@click.option(
    "--method",
    type=click.Choice(sorted(METHODS)),
    default="projection",
    show_default=True,
)
@click.option("--H", "trim", type=int, default=1, show_default=True)
@click.option("--steps", type=int, default=20_000, show_default=True)
@click.option("--p", "p", type=float, default=0.5, show_default=True)
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--no-adversary", is_flag=True, help="Cooperative agents only.")
def estimate(
    method: str,
    trim: int,
    steps: int,
    p: float,
    alpha: float,
    seed: int,
    out_path: str,
    no_adversary: bool,
) -> None:
    """Two-state chain reward estimation with one constant-sending node."""
    with _exit_codes("estimate"):
        metrics = run_example1(
            p=p,
            alpha=alpha,
            method=METHODS[method],  # type: ignore[arg-type]
            trim=trim,
            steps=steps,
            seed=seed,
            adversary=not no_adversary,
        )
        click.echo(str(export_csv(metrics, out_path, "example1")))


@main.command()
@click.option("--graph", "graph_path", required=True, type=click.Path())
@click.option("--zeta", type=int, required=True)
@click.option("--nodes", type=int, default=None, help="Node count (max id + 1).")
def robustness(graph_path: str, zeta: int, nodes: int | None) -> None:
    """Check whether an edge-list graph is zeta-robust."""
    with _exit_codes("robustness"):
        graph = CommGraph.load_edge_list(graph_path, nodes)
        robust = is_zeta_robust(graph, zeta)
        click.echo(f"{zeta}-robust: {'yes' if robust else 'no'}")
        click.echo(f"max zeta: {max_robustness(graph)}")
        click.echo(f"node connectivity: {node_connectivity(graph)}")


@main.command()
@click.option("--mdp", "mdp_path", required=True, type=click.Path())
@click.option("--gamma", type=float, default=None, help="Override the discount.")
def oracle(mdp_path: str, gamma: float | None) -> None:
    """Print the stationary distribution and linear fixed points as JSON."""
    with _exit_codes("oracle"):
        mdp, policy = load_tabular_mdp(mdp_path)
        if policy is None:
            shape = (mdp.n_states, mdp.n_joint_actions)
            policy = np.full(shape, 1.0 / mdp.n_joint_actions)
        discount = mdp.discount if gamma is None else gamma
        fixed = FixedPointOracle.from_policy(mdp, FeatureMap.one_hot(mdp), policy)
        result = {
            "gamma": discount,
            "stationary_distribution": fixed.d_s.tolist(),
            "v_pi": solve_critic_fixed_point(fixed, discount).tolist(),
            "lambda_pi": solve_reward_fixed_point(fixed).tolist(),
        }
        click.echo(json.dumps(result, indent=2))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seeds", default="0,1,2,3,4", show_default=True)
@click.option("--runners", type=int, default=1, show_default=True)
@click.pass_context
def sweep(
    ctx: click.Context, config_path: str, out_dir: str, seeds: str, runners: int
) -> None:
    """Run one config over several seeds and summarise evaluation returns."""
    with _exit_codes("sweep"):
        seed_list = _parse_seeds(seeds)
        config = ConfigManager.load_file(config_path)
        _use_config_logging(ctx, config)
        run_sweep(config, seed_list, out_dir, workers=runners)
        click.echo(str(Path(out_dir) / "sweep.csv"))


def _parse_seeds(raw: str) -> list[int]:
    try:
        seeds = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError as e:
        raise ResilientConfigError(
            f"Invalid seed list: {raw}",
            config_key="seeds",
            config_value=raw,
            suggestion="Use comma separated integers, e.g. 0,1,2",
        ) from e
    if not seeds:
        raise ResilientConfigError("Seed list is empty", config_key="seeds")
    return seeds


if __name__ == "__main__":
    main()
