"""Finite-difference gradient checking."""

from typing import Callable, Dict, Sequence

import numpy as np

from indm_core.autodiff.parameters import ParameterCollection
from indm_core.autodiff.tensor import Value, backward, no_grad


def numerical_gradient(
    fn: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5
) -> np.ndarray:
    """Central differences of a scalar function of one array."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat = x.reshape(-1)
    grad_flat = out.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        f_plus = fn(x)
        flat[i] = original - step
        f_minus = fn(x)
        flat[i] = original
        grad_flat[i] = (f_plus - f_minus) / (2.0 * step)
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - b| / max(|a|, |b|, floor) over all entries."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / scale)) if a.size else 0.0


def check_parameter_gradients(
    loss_fn: Callable[[], Value],
    params: ParameterCollection,
    step: float = 1e-5,
    names: Sequence[str] = (),
) -> Dict[str, float]:
    """Compare reverse-mode gradients of ``loss_fn`` to central differences.

    Args:
        loss_fn: Builds the scalar loss from the current parameter values
        params: Parameters to check
        step: Finite-difference step
        names: Restrict the check to these parameter names

    Returns:
        Relative error per parameter name
    """
    params.zero_grad()
    analytic = backward(loss_fn(), params=params.trainable())
    errors: Dict[str, float] = {}
    for p in params.trainable():
        if names and p.name not in names:
            continue

        def evaluate(values: np.ndarray, param=p) -> float:
            saved = param.data
            param.data = values
            try:
                with no_grad():
                    return float(loss_fn().data)
            finally:
                param.data = saved

        numeric = numerical_gradient(evaluate, p.data.copy(), step=step)
        errors[p.name] = relative_error(analytic[p.name], numeric, floor=1e-6)
    return errors
