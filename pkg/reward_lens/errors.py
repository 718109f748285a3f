"""
Exception types for reward-lens.

Every error carries a machine-readable ``code`` next to its message so the CLI
can pick an exit status and the HTTP service can pick a response status
without string matching.
"""

from typing import Any, Dict, Optional


class RewardLensError(Exception):
    """Base class for all reward-lens errors."""

    default_code = "REWARD_LENS_ERROR"

    def __init__(
        self,
        message: str,
        code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message)
        self.message = message
        self.code = code or self.default_code
        self.details = details

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class UsageError(RewardLensError):
    """Invalid arguments or an operation called outside its preconditions."""

    default_code = "USAGE_ERROR"


class ShapeError(UsageError):
    """An array does not have the dimensions an operation expects."""

    default_code = "SHAPE_MISMATCH"

    def __init__(self, what: str, expected: Any, actual: Any):
        super().__init__(
            f"{what}: expected {expected}, got {actual}",
            details={"expected": expected, "actual": actual},
        )
        self.expected = expected
        self.actual = actual


class FormatError(RewardLensError):
    """A file or request body is missing, malformed, or inconsistent."""

    default_code = "FORMAT_ERROR"

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message, details={"field": field} if field else None)
        self.field = field


class NoModelLoadedError(RewardLensError):
    """The service was asked to evaluate before any model was loaded."""

    default_code = "NO_MODEL"
