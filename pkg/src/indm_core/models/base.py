"""Base model for INDM record types.

This module provides the base class inherited by every frozen record.
"""

from dataclasses import dataclass, fields
from enum import Enum
from typing import Any, Dict

import numpy as np


@dataclass(frozen=True)
class BaseModel:
    """Base class for all data models in the application.

    Provides common functionality like string representation and dictionary conversion.
    """

    def __str__(self) -> str:
        """Return a string representation of the model."""
        attrs = [f"{key}={_short(value)}" for key, value in self.__dict__.items()]
        return f"{self.__class__.__name__}({', '.join(attrs)})"

    def __repr__(self) -> str:
        """Return a string representation of the model."""
        return self.__str__()

    def to_dict(self) -> Dict[str, Any]:
        """Convert the model to a dictionary, recursing into nested models."""
        result: Dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, BaseModel):
                value = value.to_dict()
            elif isinstance(value, Enum):
                value = value.value
            result[f.name] = value
        return result


def _short(value: Any) -> str:
    if isinstance(value, np.ndarray):
        return f"array{value.shape}"
    return str(value)
