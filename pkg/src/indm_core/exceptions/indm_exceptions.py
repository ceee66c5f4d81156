"""Custom exceptions for the INDM engine."""

from typing import Any, Dict, Optional, Sequence


class IndmException(Exception):
    """Base exception for all INDM related errors."""

    def __init__(
        self,
        message: str,
        error_code: str = "INDM_ERROR",
        context: Optional[Dict[str, Any]] = None,
    ):
        """Initialize the exception.

        Args:
            message: Human-readable error message
            error_code: Machine-readable error code
            context: Additional context information
        """
        self.message = message
        self.error_code = error_code
        self.context = context or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Convert the exception to a dictionary for structured reports."""
        return {"error_code": self.error_code, "message": self.message, "context": self.context}


class NumericalException(IndmException):
    """Base class for failures of the numerics (exit code 2 on the CLI)."""


class ShapeMismatchException(IndmException):
    """Exception raised when operand shapes are incompatible."""

    def __init__(
        self,
        op: str,
        shape_a: Sequence[int],
        shape_b: Sequence[int],
        context: Optional[Dict[str, Any]] = None,
    ):
        message = f"Shape mismatch in '{op}': {tuple(shape_a)} vs {tuple(shape_b)}"
        ctx = {"op": op, "shape_a": tuple(shape_a), "shape_b": tuple(shape_b)}
        if context:
            ctx.update(context)
        super().__init__(message, error_code="SHAPE_MISMATCH", context=ctx)


class GradientException(NumericalException):
    """Exception raised for an invalid backward pass or a bad gradient."""

    def __init__(
        self,
        message: str,
        error_code: str = "GRADIENT_ERROR",
        param_name: Optional[str] = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        ctx: Dict[str, Any] = {}
        if param_name is not None:
            ctx["param_name"] = param_name
        if context:
            ctx.update(context)
        super().__init__(message, error_code=error_code, context=ctx)


class NonFiniteException(NumericalException):
    """Exception raised when a NaN or infinity shows up in a computation."""

    def __init__(self, where: str, context: Optional[Dict[str, Any]] = None):
        message = f"Non-finite value encountered in {where}"
        ctx = {"where": where}
        if context:
            ctx.update(context)
        super().__init__(message, error_code="NON_FINITE", context=ctx)


class SolverException(NumericalException):
    """Exception raised when an ODE or assignment solver fails."""

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message, error_code="SOLVER_FAILURE", context=context)


class InvalidParameterException(IndmException):
    """Exception raised when an invalid parameter is provided."""

    def __init__(self, message: str, param_name: str, context: Optional[Dict[str, Any]] = None):
        ctx = {"param_name": param_name}
        if context:
            ctx.update(context)
        super().__init__(message, error_code="INVALID_PARAMETER", context=ctx)


class UnknownDatasetException(IndmException):
    """Exception raised when a dataset name is not known."""

    def __init__(
        self, name: str, valid: Sequence[str], context: Optional[Dict[str, Any]] = None
    ):
        message = f"Unknown dataset '{name}'. Valid names: {', '.join(valid)}"
        ctx = {"name": name, "valid": list(valid)}
        if context:
            ctx.update(context)
        super().__init__(message, error_code="UNKNOWN_DATASET", context=ctx)


class PriorDensityException(IndmException):
    """Exception raised when a density is requested from a sampling-only prior."""

    def __init__(self, kind: str, context: Optional[Dict[str, Any]] = None):
        message = f"Prior '{kind}' supports sampling only; it has no tractable density"
        ctx = {"kind": kind}
        if context:
            ctx.update(context)
        super().__init__(message, error_code="PRIOR_DENSITY_UNAVAILABLE", context=ctx)


class CheckpointException(IndmException):
    """Exception raised when a checkpoint cannot be written or read."""

    def __init__(self, message: str, path: str, context: Optional[Dict[str, Any]] = None):
        ctx = {"path": path}
        if context:
            ctx.update(context)
        super().__init__(message, error_code="CHECKPOINT_ERROR", context=ctx)


class ConfigException(IndmException):
    """Exception raised for a malformed run or environment configuration."""

    def __init__(self, message: str, key: str, context: Optional[Dict[str, Any]] = None):
        ctx = {"key": key}
        if context:
            ctx.update(context)
        super().__init__(message, error_code="CONFIG_ERROR", context=ctx)


class ExportException(IndmException):
    """Exception raised when there's an error exporting data."""

    def __init__(
        self, message: str, file_path: str, format: str, context: Optional[Dict[str, Any]] = None
    ):
        ctx = {"file_path": file_path, "format": format}
        if context:
            ctx.update(context)
        super().__init__(message, error_code="EXPORT_ERROR", context=ctx)
