"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor, no_grad


def numerical_grad(fn: Callable[[], Tensor], param: Tensor, step: float = 1e-3) -> np.ndarray:
    """d fn() / d param by central differences, perturbing ``param`` in place."""
    grad = np.zeros(param.shape, dtype=np.float64)
    flat = param.data.reshape(-1)
    assert np.shares_memory(flat, param.data)
    for i in range(flat.size):
        orig = flat[i]
        with no_grad():
            flat[i] = orig + step
            up = float(fn().data)
            flat[i] = orig - step
            down = float(fn().data)
        flat[i] = orig
        grad.reshape(-1)[i] = (up - down) / (2 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def check_gradients(
    fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-3
) -> dict[str, float]:
    """Backprop once through ``fn`` and compare every parameter gradient with
    finite differences.  Returns the max relative error per parameter."""
    for p in params:
        p.grad = None
    fn().backward()
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.astype(np.float64) for p in params]
    errors = {}
    for i, (p, a) in enumerate(zip(params, analytic)):
        errors[p.name or f"param{i}"] = relative_error(a, numerical_grad(fn, p, step))
    return errors
