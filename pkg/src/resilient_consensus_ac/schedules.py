from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any, Literal

from .exceptions import ResilientConfigError

ScheduleKind = Literal["constant", "diminishing"]


@dataclass(frozen=True)
class StepSchedule:
    """ステップサイズ列（定数 α、または a/(1+t/b)^p）"""

    kind: ScheduleKind = "constant"
    a: float = 0.01
    b: float = 1.0
    p: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "diminishing"):
            raise ResilientConfigError(
                f"Unknown schedule kind: {self.kind}",
                config_key="kind",
                config_value=self.kind,
                suggestion="Use 'constant' or 'diminishing'",
            )
        if self.a <= 0:
            raise ResilientConfigError(
                "step size must be positive",
                config_key="a",
                config_value=self.a,
            )
        if self.kind == "diminishing":
            if self.b <= 0:
                raise ResilientConfigError(
                    "schedule time scale b must be positive",
                    config_key="b",
                    config_value=self.b,
                )
            if not 0.5 < self.p <= 1.0:
                raise ResilientConfigError(
                    "diminishing exponent must lie in (0.5, 1]",
                    config_key="p",
                    config_value=self.p,
                    suggestion="p <= 0.5 is not square-summable; p > 1 is summable",
                )

    def __call__(self, t: int) -> float:
        if self.kind == "constant":
            return self.a
        return self.a / (1.0 + t / self.b) ** self.p


def step_schedule(kind: ScheduleKind, params: Mapping[str, Any], t: int) -> float:
    """種類とパラメータからステップ t の値を求める"""
    return StepSchedule(kind=kind, **dict(params))(t)


def _decays_faster(actor: StepSchedule, other: StepSchedule) -> bool:
    if actor.kind == "constant" and other.kind == "constant":
        return True
    if actor.kind == "constant":
        return False
    if other.kind == "constant":
        return True
    if actor.p != other.p:
        return actor.p > other.p
    return actor.a < other.a


def check_two_timescale(
    actor: StepSchedule, critic: StepSchedule, reward: StepSchedule
) -> None:
    """アクターのステップがクリティック・報酬モデルより速く減衰することを確認する

    定数同士の組は許容する。
    """
    for name, other in (("critic", critic), ("reward", reward)):
        if not _decays_faster(actor, other):
            raise ResilientConfigError(
                f"actor step size must decay faster than the {name} step size",
                config_key="steps.actor",
                config_value=f"{actor.kind}(a={actor.a}, p={actor.p})",
                suggestion="Use a larger exponent p or a smaller a for the actor",
            )
