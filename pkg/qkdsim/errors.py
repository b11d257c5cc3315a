"""
Exception hierarchy for qkdsim.

Every error carries a short machine-parsable ``code`` that the CLI prints as
the reason prefix of its single-line error message.
"""

from typing import Optional


class QkdError(Exception):
    """Base class for all qkdsim errors."""

    code = "error"
    exit_status = 1


class DomainError(QkdError, ValueError):
    """A value outside the mathematical domain of an operation."""

    code = "domain-error"


class ConfigError(QkdError):
    """Invalid session, sweep or channel configuration."""

    code = "config-error"
    exit_status = 2

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class UsageError(ConfigError):
    """Bad command-line usage (unknown flag, field not applicable to protocol)."""

    code = "usage-error"


class InsufficientDataError(QkdError):
    """A statistic cannot be computed because a required sample is empty."""

    code = "insufficient-data"

    def __init__(self, message: str, pair: Optional[str] = None):
        self.pair = pair
        super().__init__(message)


class ReplayError(QkdError):
    """Malformed replay input."""

    code = "parse-error"
    exit_status = 2

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        prefix = f"row {row}: " if row is not None else ""
        super().__init__(f"{prefix}{message}")
