"""Exception hierarchy for the INDM engine."""

from indm_core.exceptions.indm_exceptions import (
    CheckpointException,
    ConfigException,
    ExportException,
    GradientException,
    IndmException,
    InvalidParameterException,
    NonFiniteException,
    NumericalException,
    PriorDensityException,
    ShapeMismatchException,
    SolverException,
    UnknownDatasetException,
)

__all__ = [
    "CheckpointException",
    "ConfigException",
    "ExportException",
    "GradientException",
    "IndmException",
    "InvalidParameterException",
    "NonFiniteException",
    "NumericalException",
    "PriorDensityException",
    "ShapeMismatchException",
    "SolverException",
    "UnknownDatasetException",
]
