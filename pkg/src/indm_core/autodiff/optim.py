"""First-order optimizers over a ParameterCollection."""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from indm_core.autodiff.parameters import ParameterCollection
from indm_core.exceptions.indm_exceptions import GradientException

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Moment estimates and step counter of Adam."""

    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def check_finite_grads(grads: Dict[str, np.ndarray]) -> None:
    """Raise if any gradient holds NaN or inf, naming the parameter."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise GradientException(
                f"Non-finite gradient for parameter '{name}'",
                error_code="NAN_GRADIENT",
                param_name=name,
            )


def clip_by_global_norm(grads: Dict[str, np.ndarray], max_norm: float) -> Dict[str, np.ndarray]:
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if total <= max_norm or total == 0.0:
        return grads
    scale = max_norm / total
    return {name: g * scale for name, g in grads.items()}


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """One Adam update; pure given (params, grads, state).

    Returns:
        New parameter arrays and the new state
    """
    check_finite_grads(grads)
    beta1, beta2 = betas
    step = state.step + 1
    new_params: Dict[str, np.ndarray] = {}
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}
    for name, value in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(value)
        m = beta1 * state.m.get(name, np.zeros_like(value)) + (1.0 - beta1) * g
        v = beta2 * state.v.get(name, np.zeros_like(value)) + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        new_params[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(step=step, m=new_m, v=new_v)


def sgd_step(
    params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], lr: float
) -> Dict[str, np.ndarray]:
    check_finite_grads(grads)
    return {name: value - lr * grads.get(name, 0.0) for name, value in params.items()}


class Adam:
    """Adam bound to a ParameterCollection.

    Args:
        params: Parameters to update (only trainable ones move)
        lr: Learning rate
        betas: Moment decay rates
        eps: Denominator jitter
        grad_clip: Optional global-norm clipping threshold
        lr_drop_step: Optional step after which ``lr_drop_value`` replaces ``lr``
        lr_drop_value: Learning rate used after the drop
    """

    def __init__(
        self,
        params: ParameterCollection,
        lr: float = 1e-3,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        grad_clip: Optional[float] = None,
        lr_drop_step: Optional[int] = None,
        lr_drop_value: float = 1e-5,
    ):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.grad_clip = grad_clip
        self.lr_drop_step = lr_drop_step
        self.lr_drop_value = lr_drop_value
        self.state = AdamState()

    def current_lr(self) -> float:
        if self.lr_drop_step is not None and self.state.step >= self.lr_drop_step:
            return self.lr_drop_value
        return self.lr

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def step(self) -> None:
        trainable = self.params.trainable()
        grads = {p.name: (p.grad if p.grad is not None else np.zeros_like(p.data)) for p in trainable}
        check_finite_grads(grads)
        if self.grad_clip is not None:
            grads = clip_by_global_norm(grads, self.grad_clip)
        values = {p.name: p.data for p in trainable}
        new_values, self.state = adam_step(
            values, grads, self.state, self.current_lr(), self.betas, self.eps
        )
        for p in trainable:
            p.data = new_values[p.name]

    def state_dict(self) -> Dict[str, Any]:
        return {"step": self.state.step, "m": dict(self.state.m), "v": dict(self.state.v)}

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        self.state = AdamState(
            step=int(state["step"]),
            m={k: np.asarray(v, dtype=np.float64) for k, v in state["m"].items()},
            v={k: np.asarray(v, dtype=np.float64) for k, v in state["v"].items()},
        )


class SGD:
    """Plain gradient descent, mainly for tests and ablations."""

    def __init__(self, params: ParameterCollection, lr: float = 1e-2):
        self.params = params
        self.lr = lr

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def step(self) -> None:
        trainable = self.params.trainable()
        values = {p.name: p.data for p in trainable}
        grads = {p.name: (p.grad if p.grad is not None else np.zeros_like(p.data)) for p in trainable}
        new_values = sgd_step(values, grads, self.lr)
        for p in trainable:
            p.data = new_values[p.name]
