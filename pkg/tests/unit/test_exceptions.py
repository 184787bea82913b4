"""Tests for exception classes."""

from __future__ import annotations

import pytest

from resilient_consensus_ac.exceptions import (
    DegenerateFeatureError,
    ResilientACError,
    ResilientCapacityError,
    ResilientConfigError,
    ResilientFileError,
    ResilientNumericError,
    ResilientValidationError,
)


class TestResilientACError:
    """Test the base exception."""

    def test_details_drop_none(self) -> None:
        error = ResilientACError("failed", agent_id=3, channel=None)
        assert str(error) == "failed"
        assert error.details == {"agent_id": 3}

    def test_long_values_are_truncated(self) -> None:
        """Parameter vectors longer than 200 characters keep only their head."""
        error = ResilientACError("failed", params=list(range(200)))
        assert error.details["params"].endswith("...")
        assert len(error.details["params"]) == 203


class TestDerivedErrors:
    """Test the detail fields of each derived exception."""

    def test_config_error(self) -> None:
        error = ResilientConfigError(
            "bad", config_key="trim", config_value=-1, suggestion="Use H >= 0"
        )
        assert error.details == {
            "config_key": "trim",
            "config_value": -1,
            "suggestion": "Use H >= 0",
        }

    def test_validation_error(self) -> None:
        error = ResilientValidationError(
            "bad", validation_type="dimension", invalid_value=(2,)
        )
        assert error.details["validation_type"] == "dimension"
        assert "expected_format" not in error.details

    def test_capacity_error(self) -> None:
        error = ResilientCapacityError("too many", limit=10, requested=36**5)
        assert error.details["requested"] == 60_466_176

    def test_numeric_error(self) -> None:
        error = ResilientNumericError(
            "singular", operation="critic_fixed_point", residual=1e-3
        )
        assert error.details["operation"] == "critic_fixed_point"
        assert error.details["residual"] == 1e-3

    def test_degenerate_feature_error(self) -> None:
        assert DegenerateFeatureError("zero", feature_norm=0.0).details == {
            "feature_norm": 0.0
        }

    def test_file_error(self) -> None:
        error = ResilientFileError("io", file_path="out.csv", operation="write")
        assert error.details["operation"] == "write"

    @pytest.mark.parametrize(
        "error_class",
        [
            ResilientConfigError,
            ResilientValidationError,
            ResilientCapacityError,
            ResilientNumericError,
            DegenerateFeatureError,
            ResilientFileError,
        ],
    )
    def test_all_derive_from_base(self, error_class: type[Exception]) -> None:
        with pytest.raises(ResilientACError):
            raise error_class("message")
