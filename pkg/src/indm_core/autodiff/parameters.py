"""Named trainable parameters and their collections."""

from typing import Dict, Iterator, List, Mapping, Optional

import numpy as np

from indm_core.autodiff.tensor import Value
from indm_core.exceptions.indm_exceptions import InvalidParameterException, ShapeMismatchException


class Parameter(Value):
    """A leaf Value with a unique name inside its collection."""

    def __init__(self, data: np.ndarray, name: str, trainable: bool = True):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=trainable)
        self.name = name
        self.trainable = trainable

    def __repr__(self) -> str:
        return f"Parameter(name='{self.name}', shape={self.shape}, trainable={self.trainable})"


class ParameterCollection:
    """Ordered mapping of unique parameter names to Parameters."""

    def __init__(self, parameters: Optional[List[Parameter]] = None):
        self._params: Dict[str, Parameter] = {}
        for p in parameters or []:
            self.add(p)

    def add(self, param: Parameter) -> Parameter:
        """Register a parameter.

        Raises:
            InvalidParameterException: If the name is already taken
        """
        if param.name in self._params:
            raise InvalidParameterException(
                f"Duplicate parameter name '{param.name}'", param_name=param.name
            )
        self._params[param.name] = param
        return param

    def extend(self, other: "ParameterCollection") -> None:
        for p in other:
            self.add(p)

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> List[str]:
        return list(self._params)

    def trainable(self) -> List[Parameter]:
        return [p for p in self._params.values() if p.trainable]

    def set_trainable(self, flag: bool) -> None:
        """Freeze or unfreeze every parameter in the collection."""
        for p in self._params.values():
            p.trainable = flag
            p.requires_grad = flag

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        """Copy arrays into the parameters, matching by name and shape."""
        for name, p in self._params.items():
            if name not in state:
                raise InvalidParameterException(
                    f"Missing parameter '{name}' in state", param_name=name
                )
            array = np.asarray(state[name], dtype=np.float64)
            if array.shape != p.shape:
                raise ShapeMismatchException("load_state_dict", p.shape, array.shape)
            p.data = array.copy()

    def num_elements(self) -> int:
        return int(sum(p.data.size for p in self._params.values()))
