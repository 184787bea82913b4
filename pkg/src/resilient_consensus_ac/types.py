from __future__ import annotations

from typing import TYPE_CHECKING, Tuple, TypedDict, Union

import numpy as np

if TYPE_CHECKING:
    import numpy.typing as npt

    FloatArray = npt.NDArray[np.float64]
    IntArray = npt.NDArray[np.int64]
else:
    FloatArray = np.ndarray
    IntArray = np.ndarray

Cell = Tuple[int, int]
GridState = Tuple[Cell, ...]
# グリッドでは各エージェントのセル座標、表形式MDPでは状態インデックス
GlobalState = Union[GridState, int]
JointAction = Tuple[int, ...]


class LogContext(TypedDict, total=False):
    """ログ出力に添える任意情報をまとめるTypedDict"""

    episode: int | None
    round_index: int | None
    agent_id: int | None
    processing_step: str | None
    execution_time_ms: float | None
    error_type: str | None
