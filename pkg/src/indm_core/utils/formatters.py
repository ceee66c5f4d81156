"""Formatter utilities turning arrays and result models into tables and text."""

import json
import math
from pathlib import Path
from typing import Any, Dict, Mapping, Union

import numpy as np
import pandas as pd

from indm_core.exceptions.indm_exceptions import ExportException


def points_to_frame(points: np.ndarray, prefix: str = "x") -> pd.DataFrame:
    """One row per point with columns ``x0, x1, ...``.

    Args:
        points: Batch of shape (n, d)
        prefix: Column name prefix

    Returns:
        DataFrame of the points
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return pd.DataFrame(points, columns=[f"{prefix}{i}" for i in range(points.shape[1])])


def format_value(value: Any) -> str:
    """Render a scalar for a ``key=value`` line; floats keep full precision."""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return repr(value) if math.isfinite(value) else str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value).replace("\n", " ")


def to_key_value_text(values: Mapping[str, Any]) -> str:
    """``key=value`` lines in insertion order, newline terminated."""
    return "".join(f"{key}={format_value(value)}\n" for key, value in values.items())


def parse_key_value_text(text: str) -> Dict[str, str]:
    """Inverse of ``to_key_value_text`` (values stay strings)."""
    values: Dict[str, str] = {}
    for line in text.splitlines():
        if not line.strip() or "=" not in line:
            continue
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def export_to_file(
    data: Union[pd.DataFrame, Mapping[str, Any]],
    file_path: Union[str, Path],
    format: str = "csv",
) -> str:
    """Export data to a file.

    Args:
        data: A DataFrame (csv or json) or a flat mapping (txt or json)
        file_path: Path to save the file
        format: Export format (csv, json, txt)

    Returns:
        Path of the saved file

    Raises:
        ExportException: If export fails
    """
    file_path = Path(file_path)
    format = format.lower()

    try:
        file_path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(data, pd.DataFrame):
            if format == "csv":
                data.to_csv(file_path, index=False)
            elif format == "json":
                data.to_json(file_path, orient="records")
            else:
                raise ExportException(
                    f"Unsupported export format for a table: {format}",
                    file_path=str(file_path),
                    format=format,
                )
        elif isinstance(data, Mapping):
            if format == "txt":
                file_path.write_text(to_key_value_text(data), encoding="utf-8")
            elif format == "json":
                with open(file_path, "w", encoding="utf-8") as f:
                    json.dump({k: _jsonable(v) for k, v in data.items()}, f, indent=2)
            else:
                raise ExportException(
                    f"Unsupported export format for a mapping: {format}",
                    file_path=str(file_path),
                    format=format,
                )
        else:
            raise ExportException(
                "Unsupported data type for export", file_path=str(file_path), format=format
            )
        return str(file_path)
    except Exception as e:
        if not isinstance(e, ExportException):
            raise ExportException(
                f"Failed to export data: {str(e)}", file_path=str(file_path), format=format
            )
        raise


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value
