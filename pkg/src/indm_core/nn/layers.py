"""Dense networks built from autodiff primitives."""

import logging
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from indm_core.autodiff.parameters import Parameter, ParameterCollection
from indm_core.autodiff.tensor import Value, add, as_value, matmul, sin, swish, tanh
from indm_core.exceptions.indm_exceptions import InvalidParameterException, NonFiniteException
from indm_core.models.config import Activation

logger = logging.getLogger(__name__)

WeightOverride = Mapping[str, Union[np.ndarray, Value]]

ACTIVATIONS: Dict[Activation, Callable[[Value], Value]] = {
    Activation.TANH: tanh,
    Activation.SWISH: swish,
    Activation.SIN: sin,
}


def get_activation(name: Union[str, Activation]) -> Callable[[Value], Value]:
    try:
        return ACTIVATIONS[Activation(name)]
    except ValueError:
        raise InvalidParameterException(
            f"Unknown activation '{name}'. Valid: {', '.join(a.value for a in Activation)}",
            param_name="activation",
        )


class MLP:
    """Fully connected network ``sizes[0] -> ... -> sizes[-1]``.

    Parameters are registered in ``params`` as ``{name}.w{i}`` and
    ``{name}.b{i}``. With ``zero_last`` the output layer starts at zero, so
    the network initially outputs zero everywhere.

    Args:
        name: Prefix of the parameter names
        sizes: Layer widths, input first
        activation: Hidden-layer nonlinearity
        rng: Source of the initial weights
        params: Collection the parameters are added to
        zero_last: Zero-initialize the final layer
    """

    def __init__(
        self,
        name: str,
        sizes: Sequence[int],
        activation: Union[str, Activation],
        rng: np.random.Generator,
        params: Optional[ParameterCollection] = None,
        zero_last: bool = False,
    ):
        if len(sizes) < 2:
            raise InvalidParameterException("MLP needs at least two sizes", param_name="sizes")
        self.name = name
        self.sizes = list(sizes)
        self.activation = Activation(activation)
        self._act = get_activation(self.activation)
        self.params = params if params is not None else ParameterCollection()
        self.weight_names: List[str] = []
        self.bias_names: List[str] = []
        n_layers = len(sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            if zero_last and i == n_layers - 1:
                w = np.zeros((fan_in, fan_out))
            else:
                w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(1.0 / fan_in)
            self.params.add(Parameter(w, f"{name}.w{i}"))
            self.params.add(Parameter(np.zeros(fan_out), f"{name}.b{i}"))
            self.weight_names.append(f"{name}.w{i}")
            self.bias_names.append(f"{name}.b{i}")

    def _weight(self, key: str, weights: Optional[WeightOverride]) -> Value:
        if weights is not None and key in weights:
            return as_value(weights[key])
        return self.params[key]

    def __call__(self, x: Union[Value, np.ndarray], weights: Optional[WeightOverride] = None) -> Value:
        """Apply the network to a (n, sizes[0]) batch.

        Args:
            x: Input batch
            weights: Optional replacement arrays keyed by parameter name
                (used to evaluate with EMA shadows)

        Raises:
            NonFiniteException: If a layer output contains NaN or inf
        """
        h = as_value(x)
        last = len(self.weight_names) - 1
        for i, (wk, bk) in enumerate(zip(self.weight_names, self.bias_names)):
            h = add(matmul(h, self._weight(wk, weights)), self._weight(bk, weights))
            if i < last:
                h = self._act(h)
            if not np.all(np.isfinite(h.data)):
                logger.error(f"Non-finite activations in {self.name} layer {i}")
                raise NonFiniteException(f"{self.name} layer {i}", context={"layer": i})
        return h
