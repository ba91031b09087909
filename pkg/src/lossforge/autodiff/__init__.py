"""Minimal reverse-mode autodiff over dense float64 tensors."""

from .functional import (
    GradBundle,
    SecondOrder,
    Tape,
    evaluate,
    grad,
    hvp,
    mixed_vjp,
    value_and_grad,
)
from .tensor import (
    Tensor,
    absolute,
    add,
    as_tensor,
    broadcast_to,
    concat,
    div,
    dot,
    exp,
    getitem,
    log,
    logsumexp,
    matmul,
    mul,
    neg,
    no_record,
    outer,
    reduce_max,
    reduce_sum,
    relu,
    reshape,
    scatter_add,
    sigmoid,
    softmax,
    stop_gradient,
    sub,
    tanh,
    transpose,
)

__all__ = [
    "GradBundle", "SecondOrder", "Tape", "Tensor", "absolute", "add", "as_tensor",
    "broadcast_to", "concat", "div", "dot", "evaluate", "exp", "getitem", "grad",
    "hvp", "log", "logsumexp", "matmul", "mixed_vjp", "mul", "neg", "no_record",
    "outer", "reduce_max", "reduce_sum", "relu", "reshape", "scatter_add", "sigmoid", "softmax",
    "stop_gradient", "sub", "tanh", "transpose", "value_and_grad",
]
