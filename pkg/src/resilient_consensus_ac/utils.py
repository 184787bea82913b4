from __future__ import annotations

import importlib
import time
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any

from .exceptions import ResilientConfigError, ResilientFileError
from .logging_config import get_logger


def ensure_directory(directory: str | Path) -> None:
    """出力先ディレクトリが存在しなければ再帰的に作成する"""
    try:
        Path(directory).mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ResilientFileError(
            f"Cannot create output directory: {e!s}",
            file_path=str(directory),
            operation="mkdir",
            suggestion="Check write permissions of the parent directory",
        ) from e


def format_float(value: float) -> str:
    """17桁の有効数字で浮動小数点数を文字列化する（往復変換で値が保存される）"""
    return format(float(value), ".17g")


def resolve_callable(spec: str) -> Callable[..., Any]:
    """``module:function`` 形式の文字列から呼び出し可能オブジェクトを解決する"""
    module_name, sep, attr = spec.partition(":")
    if not sep or not module_name or not attr:
        raise ResilientConfigError(
            f"Invalid hook reference: {spec}",
            config_key="hook",
            config_value=spec,
            suggestion="Use the 'package.module:function' form",
        )

    try:
        module = importlib.import_module(module_name)
    except ImportError as e:
        raise ResilientConfigError(
            f"Cannot import hook module '{module_name}': {e!s}",
            config_key="hook",
            config_value=spec,
        ) from e

    target: Any = module
    for part in attr.split("."):
        target = getattr(target, part, None)
        if target is None:
            break
    if not callable(target):
        raise ResilientConfigError(
            f"Hook '{spec}' is not callable",
            config_key="hook",
            config_value=spec,
        )
    return target  # type: ignore[no-any-return]


@contextmanager
def timed(operation: str, **context: Any) -> Iterator[dict[str, float]]:
    """処理時間を計測し、終了時にDEBUGログへ出力する"""
    logger = get_logger(__name__)
    record: dict[str, float] = {}
    start = time.perf_counter()
    try:
        yield record
    finally:
        record["execution_time_ms"] = (time.perf_counter() - start) * 1000.0
        logger.debug(
            f"{operation} finished",
            extra={
                "context": {
                    **context,
                    "execution_time_ms": round(record["execution_time_ms"], 2),
                }
            },
        )
