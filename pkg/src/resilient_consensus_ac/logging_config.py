"""
ロギング設定

パッケージ専用ロガー ``resilient_consensus_ac`` 配下に、1行1レコードの
構造化ハンドラーを設定します。エピソード番号やエージェント番号などの
付随情報は ``extra={"context": {...}}`` で渡すと ``(key=value ...)`` として
メッセージ末尾に付きます。
"""

from __future__ import annotations

import logging
import os
import sys
from pathlib import Path
from typing import TYPE_CHECKING, Any, Union, cast

if TYPE_CHECKING:
    from collections.abc import MutableMapping

from .types import LogContext

PACKAGE_LOGGER = "resilient_consensus_ac"
LOG_LEVEL_ENV = "RESILIENT_AC_LOG_LEVEL"
LOG_PREFIX = "[resilient-ac]"
LEVEL_NAMES = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

AnyLogger = Union[logging.Logger, "logging.LoggerAdapter[logging.Logger]"]


class StructuredFormatter(logging.Formatter):
    """``[resilient-ac] LEVEL: message (k=v ...)`` 形式のフォーマッタ"""

    def __init__(self, include_caller: bool = True) -> None:
        super().__init__()
        self.include_caller = include_caller

    @staticmethod
    def _context_suffix(record: logging.LogRecord) -> str:
        context = getattr(record, "context", None)
        if not isinstance(context, dict) or not context:
            return ""
        return " (" + " ".join(f"{k}={v}" for k, v in context.items()) + ")"

    def format(self, record: logging.LogRecord) -> str:
        text = f"{LOG_PREFIX} {record.levelname}: {record.getMessage()}"
        text += self._context_suffix(record)
        # 呼び出し元はエラー以上のみ
        if self.include_caller and record.levelno >= logging.ERROR:
            text += f" [{record.module}:{record.lineno}]"
        if record.exc_info:
            text += "\n" + self.formatException(record.exc_info)
        return text


def _level_number(name: str) -> int:
    upper = name.upper()
    return cast(int, getattr(logging, upper if upper in LEVEL_NAMES else "INFO"))


def resolve_level(level: str) -> int:
    """環境変数 RESILIENT_AC_LOG_LEVEL を優先してログレベルを決める"""
    env_level = os.environ.get(LOG_LEVEL_ENV, "").upper()
    return _level_number(env_level if env_level in LEVEL_NAMES else level)


def _build_handlers(log_file: str | Path | None) -> list[logging.Handler]:
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    if log_file:
        path = Path(log_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(path, encoding="utf-8"))
    return handlers


def setup_logging(
    *,
    level: str = "INFO",
    include_caller: bool = True,
    log_file: str | Path | None = None,
    force: bool = False,
) -> None:
    """パッケージロガーに標準出力（と任意のファイル）ハンドラーを設定する

    既にハンドラーがある場合は ``force=True`` のときだけ作り直します。
    """
    logger = logging.getLogger(PACKAGE_LOGGER)
    if logger.handlers and not force:
        return

    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    numeric_level = resolve_level(level)
    formatter = StructuredFormatter(include_caller=include_caller)
    for handler in _build_handlers(log_file):
        handler.setLevel(numeric_level)
        handler.setFormatter(formatter)
        logger.addHandler(handler)

    logger.setLevel(numeric_level)
    logger.propagate = False


def get_logger(name: str) -> logging.Logger:
    """パッケージロガーを必要なら初期化してから名前付きロガーを返す"""
    if not logging.getLogger(PACKAGE_LOGGER).handlers:
        setup_logging()
    return logging.getLogger(name)


class ContextAdapter(logging.LoggerAdapter):  # type: ignore[type-arg]
    """固定のコンテキスト（シード等）を各レコードへ合流させるアダプター"""

    def process(
        self, msg: str, kwargs: MutableMapping[str, Any]
    ) -> tuple[str, MutableMapping[str, Any]]:
        extra = dict(kwargs.get("extra") or {})
        extra["context"] = {**dict(self.extra or {}), **extra.get("context", {})}
        kwargs["extra"] = extra
        return msg, kwargs


def get_context_logger(name: str, **context: Any) -> AnyLogger:
    """コンテキストがあればアダプター、なければ素のロガーを返す"""
    logger = get_logger(name)
    return ContextAdapter(logger, context) if context else logger


def log_with_context(
    logger: AnyLogger, level: str, message: str, **context: Any
) -> None:
    """その場限りのコンテキストを付けて1件出力する"""
    logger.log(_level_number(level), message, extra={"context": context})


def _compact(**fields: Any) -> LogContext:
    return cast(LogContext, {k: v for k, v in fields.items() if v is not None})


def create_round_context(
    episode: int | None = None,
    round_index: int | None = None,
    agent_id: int | None = None,
) -> LogContext:
    return _compact(episode=episode, round_index=round_index, agent_id=agent_id)


def create_error_context(
    error_type: str | None = None, processing_step: str | None = None
) -> LogContext:
    return _compact(error_type=error_type, processing_step=processing_step)


def create_performance_context(execution_time_ms: float | None = None) -> LogContext:
    return _compact(execution_time_ms=execution_time_ms)
