"""
Custom exceptions for the multi-point quasi-rational approximation toolkit.
Provides specific error types for the different failure scenarios of the
solvers, the approximant builder and the command-line front end.
"""

from typing import Dict, Any, Optional, List

import orjson


class MqraError(Exception):
    """Base exception for all toolkit errors."""

    def __init__(self, message: str, error_code: str = "GENERIC_ERROR", details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.error_code = error_code
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for JSON serialization."""
        return {
            "error": self.message,
            "error_code": self.error_code,
            "details": self.details
        }

    def to_json(self) -> str:
        """Convert exception to JSON string."""
        return orjson.dumps(self.to_dict(), default=str).decode()


class InvalidInputError(MqraError):
    """Raised when input validation fails."""

    def __init__(self, message: str, field: Optional[str] = None, value: Optional[Any] = None):
        details = {}
        if field:
            details["field"] = field
        if value is not None:
            details["value"] = str(value)

        super().__init__(
            message=message,
            error_code="INVALID_INPUT",
            details=details
        )


class ValidationError(MqraError):
    """Raised when data validation fails."""

    def __init__(self, message: str, field: str, expected_type: str, actual_value: Any):
        super().__init__(
            message=message,
            error_code="VALIDATION_ERROR",
            details={
                "field": field,
                "expected_type": expected_type,
                "actual_value": str(actual_value)
            }
        )


class ConfigurationError(MqraError):
    """Raised when configuration is invalid or missing."""

    def __init__(self, message: str, config_key: str):
        super().__init__(
            message=message,
            error_code="CONFIGURATION_ERROR",
            details={"config_key": config_key}
        )


class GridError(MqraError):
    """Raised when a sampling grid is unusable or two grids disagree."""

    def __init__(self, message: str, x_max: Optional[float] = None, h: Optional[float] = None):
        details = {}
        if x_max is not None:
            details["x_max"] = x_max
        if h is not None:
            details["h"] = h

        super().__init__(
            message=message,
            error_code="GRID_ERROR",
            details=details
        )


class BracketError(MqraError):
    """Raised when the eigenvalue bracket cannot isolate the requested level."""

    def __init__(self, message: str, level: int, bracket: Optional[tuple] = None):
        details: Dict[str, Any] = {"level": level}
        if bracket is not None:
            details["bracket"] = list(bracket)

        super().__init__(
            message=message,
            error_code="BRACKET_ERROR",
            details=details
        )


class ConvergenceError(MqraError):
    """Raised when an iterative solve stops without meeting its tolerance."""

    def __init__(self, message: str, operation: str, iterations: Optional[int] = None,
                 achieved: Optional[float] = None):
        details: Dict[str, Any] = {"operation": operation}
        if iterations is not None:
            details["iterations"] = iterations
        if achieved is not None:
            details["achieved"] = achieved

        super().__init__(
            message=message,
            error_code="CONVERGENCE_ERROR",
            details=details
        )


class ChainInconsistencyError(MqraError):
    """Raised when a chain function cannot be made to decay with the given energy."""

    def __init__(self, message: str, order: int, mismatch: float, tolerance: float):
        super().__init__(
            message=message,
            error_code="CHAIN_INCONSISTENT",
            details={
                "order": order,
                "mismatch": mismatch,
                "tolerance": tolerance
            }
        )


class ConstraintCountError(MqraError):
    """Raised when the constraint ledger does not match the number of unknowns."""

    def __init__(self, constraints: int, unknowns: int):
        super().__init__(
            message=f"constraints={constraints} unknowns={unknowns}",
            error_code="CONSTRAINT_COUNT",
            details={
                "constraints": constraints,
                "unknowns": unknowns
            }
        )


class DuplicateConstraintError(MqraError):
    """Raised when the same matching condition is imposed twice."""

    def __init__(self, message: str, constraint: str):
        super().__init__(
            message=message,
            error_code="DUPLICATE_CONSTRAINT",
            details={"constraint": constraint}
        )


class MissingSeriesError(MqraError):
    """Raised when a constraint references expansion data that is not available."""

    def __init__(self, message: str, level: int, point: str, index: int):
        super().__init__(
            message=message,
            error_code="MISSING_SERIES",
            details={
                "level": level,
                "point": point,
                "index": index
            }
        )


class SingularSystemError(MqraError):
    """Raised when the dense solve meets an exactly zero pivot."""

    def __init__(self, message: str, size: int, pivot_index: int):
        super().__init__(
            message=message,
            error_code="SINGULAR_SYSTEM",
            details={
                "size": size,
                "pivot_index": pivot_index
            }
        )


class DefectError(MqraError):
    """Raised when an approximant denominator has positive real roots."""

    def __init__(self, message: str, positive_roots: List[float], mu: Optional[float] = None):
        details: Dict[str, Any] = {"positive_roots": [float(r) for r in positive_roots]}
        if mu is not None:
            details["mu"] = mu

        super().__init__(
            message=message,
            error_code="DEFECTIVE_APPROXIMANT",
            details=details
        )


class ReproductionError(MqraError):
    """Raised when a recomputed table falls outside its tolerance."""

    def __init__(self, message: str, table: str, failures: int):
        super().__init__(
            message=message,
            error_code="REPRODUCTION_FAILED",
            details={
                "table": table,
                "failures": failures
            }
        )


USAGE_ERROR_CODES = {"INVALID_INPUT", "VALIDATION_ERROR", "CONFIGURATION_ERROR",
                     "CONSTRAINT_COUNT", "DUPLICATE_CONSTRAINT"}


def exit_code_for(error: Exception) -> int:
    """
    Map an exception to the command-line exit code.

    Args:
        error: The exception raised while running a command

    Returns:
        2 for usage and constraint-count errors, 3 for failed reproductions,
        1 for every solver or numeric failure
    """
    if isinstance(error, MqraError):
        if error.error_code in USAGE_ERROR_CODES:
            return 2
        if error.error_code == "REPRODUCTION_FAILED":
            return 3
        return 1
    if isinstance(error, ValueError):
        return 2
    return 1
