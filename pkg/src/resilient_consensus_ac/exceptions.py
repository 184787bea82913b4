"""
例外階層

ライブラリは以下の型付き例外だけを送出し、終了コードへの変換は
コマンドライン層が受け持ちます。付随情報は ``details`` に集約され、
ログのコンテキストとしてそのまま出力できます。
"""

from __future__ import annotations

from typing import Any

MAX_DETAIL_CHARS = 200


def _shorten(value: Any) -> Any:
    """長すぎる値（パラメータベクトル等）を先頭だけの文字列にする"""
    if isinstance(value, (bool, int, float)):
        return value
    text = str(value)
    if len(text) <= MAX_DETAIL_CHARS:
        return value
    return text[:MAX_DETAIL_CHARS] + "..."


class ResilientACError(Exception):
    """パッケージ共通の基底例外"""

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.details: dict[str, Any] = {
            key: _shorten(value) for key, value in details.items() if value is not None
        }


class ResilientConfigError(ResilientACError):
    """設定値の誤り"""

    def __init__(
        self,
        message: str,
        *,
        config_key: str | None = None,
        config_value: Any = None,
        suggestion: str | None = None,
    ) -> None:
        super().__init__(
            message,
            config_key=config_key,
            config_value=config_value,
            suggestion=suggestion,
        )


class ResilientValidationError(ResilientACError):
    """次元不一致・範囲外インデックス・確率行列の不整合など入力の検証失敗"""

    def __init__(
        self,
        message: str,
        *,
        validation_type: str | None = None,
        invalid_value: Any = None,
        expected_format: str | None = None,
    ) -> None:
        super().__init__(
            message,
            validation_type=validation_type,
            invalid_value=invalid_value,
            expected_format=expected_format,
        )


class ResilientCapacityError(ResilientACError):
    """全探索や状態列挙が上限を超えた"""

    def __init__(
        self, message: str, *, limit: int | None = None, requested: int | None = None
    ) -> None:
        super().__init__(message, limit=limit, requested=requested)


class ResilientNumericError(ResilientACError):
    """非収束・特異な連立方程式・残差超過"""

    def __init__(
        self,
        message: str,
        *,
        operation: str | None = None,
        residual: float | None = None,
        suggestion: str | None = None,
    ) -> None:
        super().__init__(
            message, operation=operation, residual=residual, suggestion=suggestion
        )


class DegenerateFeatureError(ResilientACError):
    """特徴ベクトルがゼロで射影による誤差推定ができない"""

    def __init__(self, message: str, *, feature_norm: float | None = None) -> None:
        super().__init__(message, feature_norm=feature_norm)


class ResilientFileError(ResilientACError):
    """設定・MDP・辺リスト・CSV・チェックポイントの読み書き失敗"""

    def __init__(
        self,
        message: str,
        *,
        file_path: str | None = None,
        operation: str | None = None,
        suggestion: str | None = None,
    ) -> None:
        super().__init__(
            message, file_path=file_path, operation=operation, suggestion=suggestion
        )
