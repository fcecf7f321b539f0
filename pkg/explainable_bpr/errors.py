"""Exceptions raised by explainable-bpr.

Every error carries a machine-readable ``code`` and the CLI exit status it maps to.
"""

from typing import Any, Dict, Optional

from .constants import EXIT_DATA, EXIT_NUMERIC, EXIT_USAGE


class ExplainableBPRError(Exception):
    """Base class for all package errors."""

    exit_code = EXIT_USAGE
    default_code = "ERROR"

    def __init__(
        self,
        message: str,
        code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message)
        self.message = message
        self.code = code or self.default_code
        self.details = details or {}

    def to_response(self) -> Dict[str, Any]:
        """Structured error payload (same shape the tools return)."""
        return {
            "error": True,
            "message": self.message,
            "details": {"code": self.code, **self.details},
        }


class UsageError(ExplainableBPRError):
    """Bad arguments, missing prerequisite artifacts or unknown ids."""

    default_code = "USAGE_ERROR"


class ConfigurationError(ExplainableBPRError):
    """A loss kind was asked to train without the data it needs."""

    default_code = "CONFIGURATION_ERROR"


class DataError(ExplainableBPRError):
    """Unreadable or degenerate input data."""

    exit_code = EXIT_DATA
    default_code = "DATA_ERROR"


class NumericError(ExplainableBPRError):
    """Non-finite parameters or an invalid value reaching a logarithm."""

    exit_code = EXIT_NUMERIC
    default_code = "NUMERIC_ERROR"
