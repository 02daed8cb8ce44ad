"""Hand-rolled numerics: tensors, tape autodiff, ops, Adam, RNG."""

from .gradcheck import (
    analytic_grads,
    check_gradients,
    finite_difference_grads,
    max_relative_error,
)
from .optim import AdamState, adam_init, adam_step, init_normal, init_ones, init_zeros
from .rng import Rng
from .tensor import (
    Tape,
    Tensor,
    add,
    backward,
    clip,
    concat,
    default_dtype,
    dropout,
    dtype_scope,
    gather_rows,
    gelu,
    layer_norm,
    leaky_relu,
    log,
    matmul,
    mul,
    neg,
    no_grad,
    reshape,
    set_debug_checks,
    set_default_dtype,
    sigmoid,
    softmax,
    stack,
    tanh,
    tmean,
    transpose,
    tsum,
    zero_grads,
)

__all__ = [
    "AdamState",
    "Rng",
    "Tape",
    "Tensor",
    "adam_init",
    "adam_step",
    "add",
    "analytic_grads",
    "backward",
    "check_gradients",
    "clip",
    "concat",
    "finite_difference_grads",
    "max_relative_error",
    "default_dtype",
    "dropout",
    "dtype_scope",
    "gather_rows",
    "gelu",
    "init_normal",
    "init_ones",
    "init_zeros",
    "layer_norm",
    "leaky_relu",
    "log",
    "matmul",
    "mul",
    "neg",
    "no_grad",
    "reshape",
    "set_debug_checks",
    "set_default_dtype",
    "sigmoid",
    "softmax",
    "stack",
    "tanh",
    "tmean",
    "transpose",
    "tsum",
    "zero_grads",
]
