"""Validation utilities for command-line and file inputs."""

import os
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from indm_core.config import DEFAULT_OUT_DIR
from indm_core.exceptions.indm_exceptions import (
    InvalidParameterException,
    ShapeMismatchException,
)


def parse_float_list(text: Union[str, Sequence[float]], param_name: str) -> List[float]:
    """Parse a comma separated list of floats such as ``"1e-5,1e-4,1e-3"``.

    Args:
        text: The list as text, or an already parsed sequence
        param_name: Name reported in errors

    Returns:
        The parsed values

    Raises:
        InvalidParameterException: If an entry is not a number or the list is empty
    """
    if not isinstance(text, str):
        values = [float(v) for v in text]
    else:
        try:
            values = [float(part) for part in text.split(",") if part.strip()]
        except ValueError:
            raise InvalidParameterException(
                f"Expected comma separated numbers, got {text!r}", param_name=param_name
            )
    if not values:
        raise InvalidParameterException("List must not be empty", param_name=param_name)
    return values


def parse_step_counts(text: Union[str, Sequence[int]]) -> List[int]:
    """Parse sampler step counts; each must be a positive integer.

    Raises:
        InvalidParameterException: If a count is not a positive integer
    """
    counts = []
    for value in parse_float_list(text, "steps"):
        if not float(value).is_integer() or value < 1:
            raise InvalidParameterException(
                f"Step counts must be positive integers, got {value}", param_name="steps"
            )
        counts.append(int(value))
    return counts


def validate_eps_values(values: Sequence[float], T: float = 1.0) -> List[float]:
    """Truncation times for a correction sweep: in (0, T), sorted ascending.

    Raises:
        InvalidParameterException: If a value lies outside (0, T)
    """
    values = sorted(float(v) for v in values)
    for eps in values:
        if not 0.0 < eps < T:
            raise InvalidParameterException(
                f"eps must lie in (0, {T}), got {eps}", param_name="eps"
            )
    return values


def validate_points(points, dim: Optional[int] = None) -> np.ndarray:
    """A finite float batch of shape (n, d).

    Raises:
        ShapeMismatchException: If the array is not two-dimensional or has the wrong width
        InvalidParameterException: If it is empty or holds NaN or infinity
    """
    array = np.asarray(points, dtype=np.float64)
    expected = (-1, dim if dim is not None else -1)
    if array.ndim != 2 or (dim is not None and array.shape[1] != dim):
        raise ShapeMismatchException("points", array.shape, expected)
    if array.shape[0] == 0:
        raise InvalidParameterException("Point batch is empty", param_name="points")
    if not np.all(np.isfinite(array)):
        raise InvalidParameterException("Point batch holds non-finite values", param_name="points")
    return array


def validate_output_dir(out_dir: Union[str, Path, None] = None) -> Path:
    """Validate an output directory, creating it if needed.

    Args:
        out_dir: Directory path as string or Path; defaults to the configured run directory

    Returns:
        Validated Path object

    Raises:
        InvalidParameterException: If the path is not usable or not writable
    """
    if out_dir is None:
        out_dir = Path(DEFAULT_OUT_DIR)
    elif isinstance(out_dir, str):
        out_dir = Path(os.path.expanduser(out_dir))
    elif not isinstance(out_dir, Path):
        raise InvalidParameterException(
            "Output directory must be a string or Path object", param_name="out_dir"
        )

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InvalidParameterException(
            f"Cannot create output directory '{out_dir}': {e}", param_name="out_dir"
        )

    if not os.access(out_dir, os.W_OK):
        raise InvalidParameterException(
            f"Output directory '{out_dir}' is not writable", param_name="out_dir"
        )

    return out_dir
