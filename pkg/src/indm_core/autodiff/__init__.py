"""Minimal reverse-mode automatic differentiation."""

from indm_core.autodiff.parameters import Parameter, ParameterCollection
from indm_core.autodiff.tensor import (
    Value,
    add,
    affine,
    as_value,
    backward,
    concat,
    cos,
    div,
    exp,
    grad,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    sigmoid,
    sin,
    square,
    sub,
    swish,
    tanh,
    vsum,
)

__all__ = [
    "Parameter",
    "ParameterCollection",
    "Value",
    "add",
    "affine",
    "as_value",
    "backward",
    "concat",
    "cos",
    "div",
    "exp",
    "grad",
    "log",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "sigmoid",
    "sin",
    "square",
    "sub",
    "swish",
    "tanh",
    "vsum",
]
