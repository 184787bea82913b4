"""
ユーティリティ関数のテスト
resilient_consensus_ac.utils の各ユーティリティ関数が正しく動作するかを
テストします。
"""

from __future__ import annotations

from pathlib import Path
from unittest.mock import patch

import pytest

from resilient_consensus_ac.exceptions import ResilientConfigError, ResilientFileError
from resilient_consensus_ac.utils import (
    ensure_directory,
    format_float,
    resolve_callable,
    timed,
)


class TestUtilityFunctions:
    """ユーティリティ関数のテストクラス"""

    def test_ensure_directory_new_directory(self, tmp_path: Path) -> None:
        """新しいディレクトリが作成されるかテスト"""
        target = tmp_path / "a" / "b"
        ensure_directory(target)
        assert target.is_dir()

    def test_ensure_directory_existing_directory(self, tmp_path: Path) -> None:
        """既存ディレクトリでもエラーにならないかテスト"""
        ensure_directory(tmp_path)
        assert tmp_path.is_dir()

    @patch("pathlib.Path.mkdir", side_effect=PermissionError("denied"))
    def test_ensure_directory_permission_error(self, _mock_mkdir: object) -> None:
        with pytest.raises(ResilientFileError) as exc_info:
            ensure_directory("/not/allowed")
        assert exc_info.value.details["operation"] == "mkdir"

    @pytest.mark.parametrize("value", [0.1 + 0.2, 1.0 / 3.0, -2.5e-300, 1e16 + 2])
    def test_format_float_round_trips(self, value: float) -> None:
        """17桁表記から読み戻すと同じ値になるかテスト"""
        assert float(format_float(value)) == value

    def test_format_float_integer_valued(self) -> None:
        assert format_float(2.0) == "2"


class TestResolveCallable:
    """``module:function`` 形式のフック解決"""

    def test_resolves_function(self) -> None:
        assert resolve_callable("os.path:join") is __import__("os").path.join

    def test_resolves_nested_attribute(self) -> None:
        target = resolve_callable(
            "resilient_consensus_ac.config:ConfigManager.from_dict"
        )
        assert callable(target)

    @pytest.mark.parametrize("spec", ["no_colon", ":func", "module:"])
    def test_malformed(self, spec: str) -> None:
        with pytest.raises(ResilientConfigError):
            resolve_callable(spec)

    def test_missing_module(self) -> None:
        with pytest.raises(ResilientConfigError) as exc_info:
            resolve_callable("no_such_module_xyz:hook")
        assert exc_info.value.details["config_key"] == "hook"

    def test_not_callable(self) -> None:
        with pytest.raises(ResilientConfigError):
            resolve_callable("resilient_consensus_ac:__version__")


class TestTimed:
    def test_records_elapsed_time(
        self, caplog_package: pytest.LogCaptureFixture
    ) -> None:
        with timed("rollout", episodes=2) as record:
            pass
        assert record["execution_time_ms"] >= 0.0
        assert "rollout finished" in caplog_package.text
