"""Invertible flow h between data space and latent space.

The flow is a stack of affine coupling layers (alternating masks) optionally
preceded by an elementwise affine layer. Every layer inverts in closed form
and reports its exact log-determinant.
"""

import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from indm_core.autodiff.functional import batched_jacobian
from indm_core.autodiff.parameters import Parameter, ParameterCollection
from indm_core.autodiff.tensor import Value, as_value, exp, mul, neg, tanh, vsum
from indm_core.exceptions.indm_exceptions import InvalidParameterException, NonFiniteException
from indm_core.models.config import Activation, FlowConfig
from indm_core.nn.layers import MLP

logger = logging.getLogger(__name__)

ArrayOrValue = Union[np.ndarray, Value]


class ActAffine:
    """Elementwise ``z = x * exp(log_scale) + shift``."""

    def __init__(
        self,
        name: str,
        dim: int,
        params: ParameterCollection,
        log_scale: Optional[np.ndarray] = None,
        shift: Optional[np.ndarray] = None,
        trainable: bool = True,
    ):
        self.name = name
        self.dim = dim
        init_scale = np.zeros(dim) if log_scale is None else np.broadcast_to(log_scale, (dim,))
        init_shift = np.zeros(dim) if shift is None else np.broadcast_to(shift, (dim,))
        self.log_scale = params.add(Parameter(init_scale, f"{name}.log_scale", trainable))
        self.shift = params.add(Parameter(init_shift, f"{name}.shift", trainable))

    def forward(self, x: Value) -> Tuple[Value, Value]:
        z = mul(x, exp(self.log_scale)) + self.shift
        logdet = mul(vsum(self.log_scale), np.ones(x.shape[0]))
        return z, logdet

    def inverse(self, z: Value) -> Value:
        return mul(z - self.shift, exp(neg(self.log_scale)))


class CouplingLayer:
    """Affine coupling: coordinates with ``mask == 1`` pass through and condition the rest.

    ``y = x*m + (1-m) * (x * exp(s(x*m)) + t(x*m))`` with the log-scale
    saturated as ``s = s_max * tanh(raw / s_max)``.
    """

    def __init__(
        self,
        name: str,
        dim: int,
        parity: int,
        hidden: int,
        activation: Union[str, Activation],
        s_max: float,
        rng: np.random.Generator,
        params: ParameterCollection,
        identity_init: bool = True,
    ):
        self.name = name
        self.dim = dim
        self.parity = parity
        self.s_max = s_max
        self.mask = (np.arange(dim) % 2 == parity).astype(np.float64)
        self.free = 1.0 - self.mask
        sizes = [dim, hidden, hidden, dim]
        self.scale_net = MLP(f"{name}.scale", sizes, activation, rng, params, identity_init)
        self.shift_net = MLP(f"{name}.shift", sizes, activation, rng, params, identity_init)

    def _scale_shift(self, kept: Value) -> Tuple[Value, Value]:
        raw = self.scale_net(kept)
        s = mul(tanh(raw / self.s_max) * self.s_max, self.free)
        t = mul(self.shift_net(kept), self.free)
        return s, t

    def forward(self, x: Value) -> Tuple[Value, Value]:
        kept = mul(x, self.mask)
        s, t = self._scale_shift(kept)
        y = kept + mul(mul(x, exp(s)) + t, self.free)
        return y, vsum(s, axis=1)

    def inverse(self, y: Value) -> Value:
        kept = mul(y, self.mask)
        s, t = self._scale_shift(kept)
        return kept + mul(mul(y - t, exp(neg(s))), self.free)


Layer = Union[ActAffine, CouplingLayer]


class FlowTransform:
    """Composition of invertible layers with exact inverse and log-determinant.

    Args:
        dim: Data dimension d
        layers: Layers applied in order by ``forward``
        params: Parameters of all layers
    """

    def __init__(self, dim: int, layers: Sequence[Layer], params: ParameterCollection):
        self.dim = dim
        self.layers: List[Layer] = list(layers)
        self.params = params
        self.inverse_calls = 0

    @classmethod
    def build(
        cls,
        dim: int,
        config: Optional[FlowConfig] = None,
        rng: Optional[np.random.Generator] = None,
        identity_init: bool = True,
    ) -> "FlowTransform":
        """Build a coupling flow; ``identity_init`` zeroes every final sub-net layer."""
        config = config or FlowConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        params = ParameterCollection()
        layers: List[Layer] = []
        if config.act_affine:
            layers.append(ActAffine("flow.act", dim, params))
        for i in range(config.n_layers):
            layers.append(
                CouplingLayer(
                    f"flow.coupling{i}",
                    dim,
                    parity=i % 2,
                    hidden=config.hidden,
                    activation=config.activation,
                    s_max=config.s_max,
                    rng=rng,
                    params=params,
                    identity_init=identity_init,
                )
            )
        logger.debug(f"Built flow with {len(layers)} layers, {params.num_elements()} weights")
        return cls(dim, layers, params)

    @classmethod
    def identity(cls, dim: int) -> "FlowTransform":
        return cls(dim, [], ParameterCollection())

    @classmethod
    def scaling(cls, dim: int, a: Union[float, np.ndarray], trainable: bool = True) -> "FlowTransform":
        """The linear map ``h(x) = a * x`` (``a`` scalar or per-coordinate, positive)."""
        a = np.broadcast_to(np.asarray(a, dtype=np.float64), (dim,))
        if np.any(a <= 0):
            raise InvalidParameterException("Scaling factors must be positive", param_name="a")
        params = ParameterCollection()
        layer = ActAffine("flow.scale", dim, params, log_scale=np.log(a), trainable=trainable)
        return cls(dim, [layer], params)

    @property
    def is_identity(self) -> bool:
        return not self.layers

    def forward_layers(self, x: ArrayOrValue) -> Tuple[Value, List[Value]]:
        """Forward pass returning the per-layer log-determinants."""
        h = as_value(x)
        if h.ndim != 2 or h.shape[1] != self.dim:
            raise InvalidParameterException(
                f"Expected points of shape (n, {self.dim}), got {h.shape}", param_name="x"
            )
        if not np.all(np.isfinite(h.data)):
            raise NonFiniteException("flow input")
        logdets: List[Value] = []
        for i, layer in enumerate(self.layers):
            h, ld = layer.forward(h)
            if not (np.all(np.isfinite(h.data)) and np.all(np.isfinite(ld.data))):
                logger.error(f"Non-finite output of flow layer {i}")
                raise NonFiniteException(f"flow layer {i}", context={"layer": i})
            logdets.append(ld)
        return h, logdets

    def forward(self, x: ArrayOrValue) -> Tuple[Value, Value]:
        z, logdets = self.forward_layers(x)
        total = Value(np.zeros(z.shape[0]))
        for ld in logdets:
            total = total + ld
        return z, total

    def inverse(self, z: ArrayOrValue) -> Value:
        self.inverse_calls += 1
        h = as_value(z)
        if not np.all(np.isfinite(h.data)):
            raise NonFiniteException("flow inverse input")
        for i in reversed(range(len(self.layers))):
            h = self.layers[i].inverse(h)
            if not np.all(np.isfinite(h.data)):
                logger.error(f"Non-finite output of inverse flow layer {i}")
                raise NonFiniteException(f"flow layer {i} (inverse)", context={"layer": i})
        return h


def flow_forward(flow: FlowTransform, x: ArrayOrValue) -> Tuple[Value, Value]:
    """``(h(x), log|det dh/dx|)`` per sample, differentiable in parameters and x."""
    return flow.forward(x)


def flow_inverse(flow: FlowTransform, z: ArrayOrValue) -> Value:
    return flow.inverse(z)


def flow_jacobians(flow: FlowTransform, x: np.ndarray) -> np.ndarray:
    """Per-point Jacobians of h, shape (n, d, d)."""
    return batched_jacobian(lambda v: flow.forward(v)[0], np.atleast_2d(x))


def flow_inverse_jacobians(flow: FlowTransform, z: np.ndarray) -> np.ndarray:
    """Per-point Jacobians of h^-1, shape (n, d, d)."""
    return batched_jacobian(flow.inverse, np.atleast_2d(z))


def flow_jacobian(flow: FlowTransform, x: np.ndarray) -> np.ndarray:
    """d x d Jacobian of h at a single point."""
    return flow_jacobians(flow, np.asarray(x, dtype=np.float64).reshape(1, -1))[0]


def flow_inverse_jacobian(flow: FlowTransform, z: np.ndarray) -> np.ndarray:
    """d x d Jacobian of h^-1 at a single latent point."""
    return flow_inverse_jacobians(flow, np.asarray(z, dtype=np.float64).reshape(1, -1))[0]
