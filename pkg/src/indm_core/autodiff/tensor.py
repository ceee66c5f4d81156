"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Value` wraps a numpy array and, while gradient recording is enabled,
remembers the operation that produced it. Backward rules are written with
``Value`` operations themselves, so a backward pass run with
``create_graph=True`` is differentiable again (needed by the symmetry
regularizer, which differentiates vector-Jacobian products).
"""

import contextlib
import logging
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from indm_core.exceptions.indm_exceptions import GradientException, ShapeMismatchException

logger = logging.getLogger(__name__)

ArrayLike = Union["Value", np.ndarray, float, int]
BackwardFn = Callable[["Value", "Value"], Tuple[Optional["Value"], ...]]

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording inside the block."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


@contextlib.contextmanager
def enable_grad() -> Iterator[None]:
    """Re-enable tape recording inside the block."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = True
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def is_grad_enabled() -> bool:
    """Whether operations currently record provenance."""
    return _GRAD_ENABLED


class Value:
    """A dense f64 array with an optional link into the tape."""

    __array_priority__ = 100.0

    def __init__(
        self,
        data: Union[np.ndarray, float, int, Sequence[float]],
        requires_grad: bool = False,
        _parents: Tuple["Value", ...] = (),
        _backward: Optional[BackwardFn] = None,
        _op: str = "",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self._op = _op

    # ----------------------------------------------------------------- basics
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    @property
    def T(self) -> "Value":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Value":
        return Value(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Value(shape={self.shape}{flag}, op='{self._op or 'leaf'}')"

    def __len__(self) -> int:
        return len(self.data)

    # -------------------------------------------------------------- operators
    def __add__(self, other: ArrayLike) -> "Value":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Value":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Value":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Value":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Value":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Value":
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> "Value":
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Value":
        return div(other, self)

    def __neg__(self) -> "Value":
        return neg(self)

    def __pow__(self, exponent: float) -> "Value":
        return power(self, exponent)

    def __matmul__(self, other: ArrayLike) -> "Value":
        return matmul(self, other)

    def __rmatmul__(self, other: ArrayLike) -> "Value":
        return matmul(other, self)

    def __getitem__(self, index) -> "Value":
        return getitem(self, index)

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Value":
        return vsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Value":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Value":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def tanh(self) -> "Value":
        return tanh(self)

    def exp(self) -> "Value":
        return exp(self)

    def log(self) -> "Value":
        return log(self)

    def square(self) -> "Value":
        return square(self)


def as_value(x: ArrayLike) -> Value:
    """Wrap arrays and scalars as constant Values; pass Values through."""
    if isinstance(x, Value):
        return x
    return Value(x)


def _record(
    data: np.ndarray, parents: Tuple[Value, ...], backward: BackwardFn, op: str
) -> Value:
    """Create the result node, linking it into the tape when needed."""
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Value(data, requires_grad=True, _parents=parents, _backward=backward, _op=op)
    return Value(data)


def _broadcast_shape(op: str, a: Value, b: Value) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchException(op, a.shape, b.shape)


def unbroadcast(grad: Value, shape: Tuple[int, ...]) -> Value:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    for _ in range(extra):
        grad = vsum(grad, axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = vsum(grad, axis=axis, keepdims=True)
    return grad


# ----------------------------------------------------------------- arithmetic
def add(a: ArrayLike, b: ArrayLike) -> Value:
    a, b = as_value(a), as_value(b)
    _broadcast_shape("add", a, b)

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return _record(a.data + b.data, (a, b), backward, "add")


def sub(a: ArrayLike, b: ArrayLike) -> Value:
    a, b = as_value(a), as_value(b)
    _broadcast_shape("sub", a, b)

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        return unbroadcast(g, a.shape), unbroadcast(neg(g), b.shape)

    return _record(a.data - b.data, (a, b), backward, "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Value:
    a, b = as_value(a), as_value(b)
    _broadcast_shape("mul", a, b)

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        ga = unbroadcast(mul(g, b), a.shape) if a.requires_grad else None
        gb = unbroadcast(mul(g, a), b.shape) if b.requires_grad else None
        return ga, gb

    return _record(a.data * b.data, (a, b), backward, "mul")


def div(a: ArrayLike, b: ArrayLike) -> Value:
    a, b = as_value(a), as_value(b)
    _broadcast_shape("div", a, b)

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        ga = unbroadcast(div(g, b), a.shape) if a.requires_grad else None
        gb = unbroadcast(neg(mul(g, div(out, b))), b.shape) if b.requires_grad else None
        return ga, gb

    return _record(a.data / b.data, (a, b), backward, "div")


def neg(a: ArrayLike) -> Value:
    a = as_value(a)

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        return (neg(g),)

    return _record(-a.data, (a,), backward, "neg")


def power(a: ArrayLike, exponent: float) -> Value:
    a = as_value(a)

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        return (mul(g, mul(exponent, power(a, exponent - 1.0))),)

    return _record(a.data**exponent, (a,), backward, "pow")


def square(a: ArrayLike) -> Value:
    a = as_value(a)

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        return (mul(g, mul(2.0, a)),)

    return _record(a.data * a.data, (a,), backward, "square")


def matmul(a: ArrayLike, b: ArrayLike) -> Value:
    a, b = as_value(a), as_value(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchException("matmul", a.shape, b.shape)

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        ga = matmul(g, transpose(b)) if a.requires_grad else None
        gb = matmul(transpose(a), g) if b.requires_grad else None
        return ga, gb

    return _record(a.data @ b.data, (a, b), backward, "matmul")


def affine(x: ArrayLike, scale: ArrayLike, shift: ArrayLike) -> Value:
    """Elementwise ``scale * x + shift`` with broadcasting."""
    return add(mul(x, scale), shift)


# ----------------------------------------------------------------- elementwise
def tanh(a: ArrayLike) -> Value:
    a = as_value(a)

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        return (mul(g, sub(1.0, square(out))),)

    return _record(np.tanh(a.data), (a,), backward, "tanh")


def sin(a: ArrayLike) -> Value:
    a = as_value(a)

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        return (mul(g, cos(a)),)

    return _record(np.sin(a.data), (a,), backward, "sin")


def cos(a: ArrayLike) -> Value:
    a = as_value(a)

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        return (neg(mul(g, sin(a))),)

    return _record(np.cos(a.data), (a,), backward, "cos")


def exp(a: ArrayLike) -> Value:
    a = as_value(a)

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        return (mul(g, out),)

    return _record(np.exp(a.data), (a,), backward, "exp")


def log(a: ArrayLike) -> Value:
    a = as_value(a)

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        return (div(g, a),)

    return _record(np.log(a.data), (a,), backward, "log")


def sigmoid(a: ArrayLike) -> Value:
    """Logistic function composed from primitives."""
    return div(1.0, add(1.0, exp(neg(a))))


def swish(a: ArrayLike) -> Value:
    """``x * sigmoid(x)``."""
    a = as_value(a)
    return mul(a, sigmoid(a))


# ------------------------------------------------------------------ reductions
def vsum(a: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> Value:
    a = as_value(a)
    shape = a.shape

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        if axis is not None and not keepdims:
            g = reshape(g, np.expand_dims(out.data, axis).shape)
        elif axis is None and not keepdims:
            g = reshape(g, (1,) * len(shape))
        return (broadcast_to(g, shape),)

    return _record(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward, "sum")


def mean(a: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> Value:
    a = as_value(a)
    count = a.data.size if axis is None else a.shape[axis]
    return div(vsum(a, axis=axis, keepdims=keepdims), float(count))


def broadcast_to(a: ArrayLike, shape: Tuple[int, ...]) -> Value:
    a = as_value(a)

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        return (unbroadcast(g, a.shape),)

    try:
        data = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeMismatchException("broadcast_to", a.shape, shape)
    return _record(data, (a,), backward, "broadcast")


# -------------------------------------------------------------- shape handling
def reshape(a: ArrayLike, shape: Sequence[int]) -> Value:
    a = as_value(a)
    original = a.shape

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        return (reshape(g, original),)

    try:
        data = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeMismatchException("reshape", a.shape, tuple(shape))
    return _record(data, (a,), backward, "reshape")


def transpose(a: ArrayLike) -> Value:
    a = as_value(a)

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        return (transpose(g),)

    return _record(a.data.T, (a,), backward, "transpose")


def getitem(a: ArrayLike, index) -> Value:
    a = as_value(a)
    shape = a.shape

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        return (scatter(g, index, shape),)

    return _record(a.data[index], (a,), backward, "getitem")


def scatter(g: ArrayLike, index, shape: Tuple[int, ...]) -> Value:
    """Place ``g`` at ``index`` inside a zero array of ``shape`` (adjoint of getitem)."""
    g = as_value(g)

    def backward(gg: Value, out: Value) -> Tuple[Optional[Value], ...]:
        return (getitem(gg, index),)

    data = np.zeros(shape)
    np.add.at(data, index, g.data)
    return _record(data, (g,), backward, "scatter")


def concat(values: Sequence[ArrayLike], axis: int = -1) -> Value:
    parts = [as_value(v) for v in values]
    ndim = parts[0].ndim
    axis = axis % ndim
    for p in parts[1:]:
        other = tuple(s for i, s in enumerate(p.shape) if i != axis)
        first = tuple(s for i, s in enumerate(parts[0].shape) if i != axis)
        if p.ndim != ndim or other != first:
            raise ShapeMismatchException("concat", parts[0].shape, p.shape)
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def backward(g: Value, out: Value) -> Tuple[Optional[Value], ...]:
        grads = []
        for i in range(len(parts)):
            index = [slice(None)] * ndim
            index[axis] = slice(int(bounds[i]), int(bounds[i + 1]))
            grads.append(getitem(g, tuple(index)))
        return tuple(grads)

    data = np.concatenate([p.data for p in parts], axis=axis)
    return _record(data, tuple(parts), backward, "concat")


# -------------------------------------------------------------- backward pass
def _topological_order(root: Value) -> List[Value]:
    order: List[Value] = []
    visited = set()
    stack: List[Tuple[Value, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _propagate(
    root: Value, seed: Value, create_graph: bool, retain_graph: bool
) -> Tuple[Dict[int, Value], List[Value]]:
    """Run the reverse sweep; returns gradients keyed by node id and the leaves reached."""
    order = _topological_order(root)
    grads: Dict[int, Value] = {id(root): seed}
    context = enable_grad() if create_graph else no_grad()
    with context:
        for node in reversed(order):
            g = grads.get(id(node))
            if g is None or node._backward is None:
                continue
            parent_grads = node._backward(g, node)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else add(grads[key], pg)
    if not retain_graph and not create_graph:
        for node in order:
            if not node.is_leaf:
                node._parents = ()
                node._backward = None
    leaves = [n for n in order if n.is_leaf]
    return grads, leaves


def backward(
    root: Value, retain_graph: bool = False, params: Optional[Iterable[Value]] = None
) -> Dict[str, np.ndarray]:
    """Accumulate d(root)/d(leaf) into ``.grad`` of every leaf requiring grad.

    Args:
        root: Scalar-shaped Value
        retain_graph: Keep the tape for another pass over the same expression
        params: Leaves that get a zero ``.grad`` when ``root`` does not reach
            them; a constant root then leaves every one of them at zero

    Returns:
        Mapping from parameter name to its accumulated gradient, for every
        named trainable leaf reached from ``root`` or listed in ``params``

    Raises:
        GradientException: If root is not scalar-shaped
    """
    if root.data.size != 1:
        raise GradientException(
            f"backward() needs a scalar root, got shape {root.shape}",
            error_code="NON_SCALAR_ROOT",
        )
    result: Dict[str, np.ndarray] = {}
    if root.requires_grad:
        grads, leaves = _propagate(root, Value(np.ones_like(root.data)), False, retain_graph)
        for leaf in leaves:
            g = grads.get(id(leaf))
            if g is None:
                continue
            leaf.grad = g.data.copy() if leaf.grad is None else leaf.grad + g.data
            name = getattr(leaf, "name", None)
            if name is not None:
                result[name] = leaf.grad
    for leaf in params or ():
        if not leaf.requires_grad:
            continue
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
        name = getattr(leaf, "name", None)
        if name is not None and name not in result:
            result[name] = leaf.grad
    return result


def grad(
    root: Value,
    inputs: Sequence[Value],
    grad_output: Optional[ArrayLike] = None,
    create_graph: bool = False,
    retain_graph: bool = True,
) -> List[Value]:
    """Return d(root)/d(inputs) without touching ``.grad``.

    ``grad_output`` seeds a vector-Jacobian product for non-scalar roots.
    With ``create_graph=True`` the returned Values are themselves on the tape.
    """
    if grad_output is None:
        if root.data.size != 1:
            raise GradientException(
                f"grad() of a non-scalar root {root.shape} needs grad_output",
                error_code="NON_SCALAR_ROOT",
            )
        seed = Value(np.ones_like(root.data))
    else:
        seed = as_value(grad_output)
    if not root.requires_grad:
        return [Value(np.zeros_like(x.data)) for x in inputs]
    grads, _ = _propagate(root, seed, create_graph, retain_graph)
    out = []
    for x in inputs:
        g = grads.get(id(x))
        out.append(g if g is not None else Value(np.zeros_like(x.data)))
    return out
