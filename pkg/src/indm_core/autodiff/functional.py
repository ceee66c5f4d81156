"""Derivative helpers built on the tape: batched Jacobians, divergences, VJPs."""

from typing import Callable, Tuple

import numpy as np

from indm_core.autodiff.tensor import Value, enable_grad, getitem, grad, vsum

VectorField = Callable[[Value], Value]


def _jacobian_rows(fn: VectorField, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    with enable_grad():
        xv = Value(np.array(x, dtype=np.float64), requires_grad=True)
        out = fn(xv)
        n, d_out = out.shape
        jac = np.zeros((n, d_out, xv.shape[1]))
        for i in range(d_out):
            (gi,) = grad(vsum(getitem(out, (slice(None), i))), [xv], retain_graph=True)
            jac[:, i, :] = gi.data
    return out.data.copy(), jac


def batched_jacobian(fn: VectorField, x: np.ndarray) -> np.ndarray:
    """Per-sample Jacobians of a row-wise map ``fn: (n, d_in) -> (n, d_out)``.

    Rows must not interact, so the gradient of ``sum_b fn(x)[b, i]`` with
    respect to ``x[b]`` is row ``i`` of sample ``b``'s Jacobian.

    Returns:
        Array of shape (n, d_out, d_in)
    """
    return _jacobian_rows(fn, x)[1]


def field_and_divergence(fn: VectorField, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(fn(x), tr(d fn / dx))`` from one forward pass and d reverse passes."""
    out, jac = _jacobian_rows(fn, x)
    return out, np.trace(jac, axis1=1, axis2=2)


def exact_divergence(fn: VectorField, x: np.ndarray) -> np.ndarray:
    """Trace of the per-sample Jacobian, one reverse pass per coordinate."""
    return field_and_divergence(fn, x)[1]


def hutchinson_divergence(fn: VectorField, x: np.ndarray, probes: np.ndarray) -> np.ndarray:
    """Hutchinson trace estimates ``eps^T (d fn / dx) eps`` for each probe.

    Args:
        fn: Row-wise vector field
        x: Points, shape (n, d)
        probes: Probe vectors, shape (k, n, d)

    Returns:
        Estimates of shape (k, n)
    """
    with enable_grad():
        xv = Value(np.array(x, dtype=np.float64), requires_grad=True)
        out = fn(xv)
        estimates = np.zeros((probes.shape[0], xv.shape[0]))
        for k, eps in enumerate(probes):
            (g,) = grad(out, [xv], grad_output=eps, retain_graph=True)
            estimates[k] = np.sum(g.data * eps, axis=1)
    return estimates
