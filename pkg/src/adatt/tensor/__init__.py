from .autodiff import Node, ShapeError, Tape, Tensor, default_dtype, get_default_dtype, no_grad
from .ops import (
    add,
    bce_loss,
    concat,
    concat_rows,
    embedding,
    matmul,
    mean,
    mse_loss,
    mul,
    mul_scalar,
    ones,
    pad,
    relu,
    reshape,
    sigmoid,
    slice_axis,
    slice_rows,
    softmax_rows,
    stack,
    sum,
    transpose,
    weighted_sum,
    zeros,
)
from .optim import Adam

__all__ = [
    "Adam",
    "Node",
    "ShapeError",
    "Tape",
    "Tensor",
    "add",
    "bce_loss",
    "concat",
    "concat_rows",
    "default_dtype",
    "embedding",
    "get_default_dtype",
    "matmul",
    "mean",
    "mse_loss",
    "mul",
    "mul_scalar",
    "no_grad",
    "ones",
    "pad",
    "relu",
    "reshape",
    "sigmoid",
    "slice_axis",
    "slice_rows",
    "softmax_rows",
    "stack",
    "sum",
    "transpose",
    "weighted_sum",
    "zeros",
]
