"""Differentiable ops.  Each function computes its forward value with numpy and
registers the matching backward rule on the result."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import ShapeError, Tensor, get_default_dtype, make_result


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(a.data + b.data, (a, b), backward, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_result(a.data * b.data, (a, b), backward, "mul")


def mul_scalar(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return make_result(a.data * a.data.dtype.type(c), (a,), lambda g: (g * c,), "mul_scalar")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return make_result(a.data @ b.data, (a, b), backward, "matmul")


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {a.shape}")
    return make_result(a.data.T, (a,), lambda g: (g.T,), "transpose")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None
    return make_result(data, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return make_result(np.maximum(a.data, 0).astype(a.data.dtype, copy=False), (a,), lambda g: (g * mask,), "relu")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return make_result(s, (a,), lambda g: (g * s * (1 - s),), "sigmoid")


def softmax_rows(a: Tensor) -> Tensor:
    """Softmax over the last axis, with per-row max subtraction."""
    if a.data.ndim == 0 or a.shape[-1] == 0:
        raise ShapeError(f"softmax_rows: empty rows in shape {a.shape}")
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return make_result(s, (a,), backward, "softmax_rows")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: no inputs")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return np.split(g, bounds, axis=axis)

    return make_result(data, tensors, backward, "concat")


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    return concat(tensors, axis=0)


def stack(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("stack: no inputs")
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack: all inputs need one shape, got {sorted(shapes)}")
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        return [np.take(g, i, axis=axis) for i in range(len(tensors))]

    return make_result(data, tensors, backward, "stack")


def slice_axis(a: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    n = a.shape[axis]
    if not 0 <= start <= stop <= n:
        raise ShapeError(f"slice [{start}:{stop}] out of range for axis {axis} of {a.shape}")
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return make_result(a.data[index], (a,), backward, "slice")


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    return slice_axis(a, start, stop, axis=0)


def pad(a: Tensor, before: int, after: int) -> Tensor:
    """Zero-pad the last axis."""
    widths = [(0, 0)] * (a.data.ndim - 1) + [(before, after)]
    n = a.shape[-1]
    return make_result(
        np.pad(a.data, widths), (a,), lambda g: (g[..., before : before + n],), "pad"
    )


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    if axis is None:
        return make_result(
            np.asarray(a.data.sum(dtype=np.float64), dtype=a.data.dtype),
            (a,),
            lambda g: (np.broadcast_to(g, a.shape).copy(),),
            "sum",
        )

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return make_result(a.data.sum(axis=axis), (a,), backward, "sum")


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    return mul_scalar(sum(a, axis), 1.0 / n)


def weighted_sum(weights: Tensor, experts: Tensor) -> Tensor:
    """Combine stacked experts ``[B, K, d]`` with weights ``[B, K]`` (or ``[K]``
    shared by the batch) into ``[B, d]``."""
    if experts.data.ndim != 3:
        raise ShapeError(f"weighted_sum: experts must be [B, K, d], got {experts.shape}")
    b, k, _ = experts.shape
    if weights.shape not in ((b, k), (k,)):
        raise ShapeError(f"weighted_sum: weights {weights.shape} do not match experts {experts.shape}")
    shared = weights.data.ndim == 1
    spec = "k,bkd->bd" if shared else "bk,bkd->bd"
    out = np.einsum(spec, weights.data, experts.data)

    def backward(g):
        gw = np.einsum("bd,bkd->k" if shared else "bd,bkd->bk", g, experts.data)
        ge = np.einsum("k,bd->bkd" if shared else "bk,bd->bkd", weights.data, g)
        return gw, ge

    return make_result(out, (weights, experts), backward, "weighted_sum")


def embedding(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row lookup ``table[indices]``; gradients scatter-add back into the table."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"embedding: indices must be 1-D, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(f"embedding: index out of range for table of {table.shape[0]} rows")

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return (full,)

    return make_result(table.data[idx], (table,), backward, "embedding")


def _check_column(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape or a.data.ndim != 2 or a.shape[1] != 1:
        raise ShapeError(f"{op}: expected two [B, 1] tensors, got {a.shape} and {b.shape}")


def bce_loss(logits: Tensor, labels: Tensor) -> Tensor:
    """Mean binary cross-entropy computed from logits.

    Uses ``max(z, 0) - z*y + log1p(exp(-|z|))`` so large logits never pass
    through a saturated sigmoid.  Accumulation is done in float64.
    """
    _check_column("bce_loss", logits, labels)
    y = labels.data.astype(np.float64)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("bce_loss: labels must be 0 or 1")
    z = logits.data.astype(np.float64)
    per = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    n = z.shape[0]
    value = np.asarray(per.mean(), dtype=logits.data.dtype)
    p = _sigmoid(z)

    def backward(g):
        return ((p - y) * (float(g) / n)), None

    return make_result(value, (logits, labels), backward, "bce_loss")


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    _check_column("mse_loss", pred, target)
    diff = pred.data.astype(np.float64) - target.data.astype(np.float64)
    n = diff.shape[0]
    value = np.asarray(np.mean(diff**2), dtype=pred.data.dtype)

    def backward(g):
        gd = diff * (2.0 * float(g) / n)
        return gd, -gd

    return make_result(value, (pred, target), backward, "mse_loss")


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=get_default_dtype()), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape, dtype=get_default_dtype()), requires_grad=requires_grad)
