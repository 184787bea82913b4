"""
共通テストフィクスチャとユーティリティ

小さなMDP・グリッド・通信グラフ・設定辞書など、複数のテストファイルで
共有する入力をここにまとめます。
"""

from __future__ import annotations

import logging
from collections.abc import Iterator
from typing import Any

import numpy as np
import pytest

from resilient_consensus_ac.consensus import CommGraph
from resilient_consensus_ac.logging_config import PACKAGE_LOGGER
from resilient_consensus_ac.mmdp import (
    GridWorldSpec,
    TabularMMDP,
    example1_mdp,
    random_tabular_mdp,
)


@pytest.fixture
def example1() -> TabularMMDP:
    """p=0.5 の2状態チェーン"""
    return example1_mdp(0.5)


@pytest.fixture
def small_mdp() -> TabularMMDP:
    """4状態・2エージェント（各2行動）のランダムMMDP"""
    return random_tabular_mdp(4, (2, 2), 2, seed=3, discount=0.5)


@pytest.fixture
def tiny_grid() -> GridWorldSpec:
    """3×3グリッドに2エージェントを固定配置した定義"""
    return GridWorldSpec(
        width=3,
        height=3,
        n_agents=2,
        targets=((0, 0), (2, 2)),
        initial_positions=((2, 0), (0, 2)),
        episode_len=5,
    )


@pytest.fixture
def k4() -> CommGraph:
    return CommGraph.complete(4)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def base_config_dict() -> dict[str, Any]:
    """小さな表形式MDPで短時間に終わる学習設定"""
    return {
        "algorithm": "alg2",
        "seed": 7,
        "episodes": 3,
        "steps_per_episode": 5,
        "eval_every": 0,
        "gamma": 0.5,
        "trim": 0,
        "environment": {
            "kind": "random_tabular",
            "n_states": 3,
            "action_shape": [2, 2, 2],
            "mdp_seed": 1,
        },
        "graph": {"kind": "complete"},
        "steps": {
            "critic": {"kind": "constant", "a": 0.05},
            "reward": {"kind": "constant", "a": 0.05},
            "actor": {"kind": "constant", "a": 0.01},
        },
        "log_level": "WARNING",
    }


@pytest.fixture
def caplog_package(
    caplog: pytest.LogCaptureFixture,
) -> Iterator[pytest.LogCaptureFixture]:
    """パッケージロガーは伝播しないため、caplogのハンドラーを直接取り付ける"""
    logger = logging.getLogger(PACKAGE_LOGGER)
    logger.addHandler(caplog.handler)
    caplog.set_level(logging.DEBUG, logger=PACKAGE_LOGGER)
    yield caplog
    logger.removeHandler(caplog.handler)
