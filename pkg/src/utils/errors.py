"""
Structural Complexity Toolkit - Error Types

Exception hierarchy shared by every module. Each class carries the exit code
the command-line surface reports for it.
"""

from typing import Any, Dict, Optional


class SCError(Exception):
    """Base class for all toolkit errors"""

    exit_code = 1

    def to_event(self) -> Dict[str, Any]:
        """Structured payload for error events"""
        return {"error": type(self).__name__, "message": str(self)}


class InvalidArgumentError(SCError, ValueError):
    """A caller-supplied argument violates an operation precondition"""

    exit_code = 2


class InfeasibleRateError(InvalidArgumentError):
    """Stratified selection cannot give every user one entry at this rate"""


class UndefinedBaselineError(InvalidArgumentError):
    """RPA baseline metric is not strictly positive"""


class DegenerateInputError(InvalidArgumentError):
    """Correlation input has too few points or zero variance"""


class UnsupportedOperationError(InvalidArgumentError):
    """Operation needs data the matrix does not carry (e.g. timestamps)"""


class DataError(SCError):
    """Input data cannot be used"""

    exit_code = 3


class ParseError(DataError):
    """Malformed row in a delimited interaction file"""

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")

    def to_event(self) -> Dict[str, Any]:
        event = super().to_event()
        event["line"] = self.line
        return event


class EmptyInputError(DataError):
    """Input contains no interaction records"""


class EmptyResultError(DataError):
    """A pipeline stage removed every interaction"""


class CannotRelocateError(DataError):
    """Not enough empty cells to receive relocated entries"""


class CacheFormatError(DataError):
    """Binary cache file has the wrong magic or a truncated payload"""


class NumericError(SCError):
    """Numerical failure"""

    exit_code = 4


class NumericInputError(NumericError):
    """Matrix contains NaN or infinite values"""


class RatioUndefinedError(NumericError):
    """RMSE_SVD is zero, so RMSE_SC cannot be formed"""

    def __init__(self, message: str, report: Optional[Any] = None):
        self.report = report
        super().__init__(message)
