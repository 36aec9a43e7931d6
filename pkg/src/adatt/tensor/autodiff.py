"""Dense tensors with reverse-mode automatic differentiation.

Every op that consumes a tensor with ``requires_grad`` set returns a tensor
carrying a :class:`Node` (its input handles and backward rule).  Calling
:meth:`Tensor.backward` on a scalar orders the reachable nodes into a
:class:`Tape`, walks it once in reverse, then drops the graph.
"""

from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

_state = threading.local()


def get_default_dtype() -> np.dtype:
    return getattr(_state, "dtype", np.dtype(np.float32))


@contextlib.contextmanager
def default_dtype(dtype) -> Iterator[None]:
    """Temporarily change the float type used for new tensors and parameters."""
    prev = get_default_dtype()
    _state.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = prev


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    prev = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class ShapeError(ValueError):
    """Operand shapes are incompatible for an op."""


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass(eq=False)
class Node:
    op: str
    inputs: tuple["Tensor", ...]
    backward: BackwardFn


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        # float arrays keep their precision; lists, scalars and ints take the default
        arr = np.asarray(data)
        if arr.dtype.kind != "f" or not isinstance(data, np.ndarray):
            arr = arr.astype(get_default_dtype(), copy=False)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node: Node | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def tape_id(self) -> int | None:
        return id(self.node) if self.node is not None else None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> "Tape":
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar output, got shape {self.shape}")
        tape = Tape.record(self)
        tape.run(self)
        return tape

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from . import ops

        return ops.add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.add(self, ops.mul_scalar(_wrap(other), -1.0))

    def __rsub__(self, other):
        from . import ops

        return ops.add(_wrap(other), ops.mul_scalar(self, -1.0))

    def __neg__(self):
        from . import ops

        return ops.mul_scalar(self, -1.0)

    def __mul__(self, other):
        from . import ops

        if isinstance(other, (int, float)):
            return ops.mul_scalar(self, float(other))
        return ops.mul(self, _wrap(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, _wrap(other))


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=get_default_dtype()))


def make_result(data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn, op: str) -> Tensor:
    out = Tensor(data)
    if grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = Node(op, tuple(inputs), backward)
    return out


@dataclass
class Tape:
    """Recorded ops reachable from one output, in topological order."""

    nodes: list[Tensor] = field(default_factory=list)
    visits: int = 0
    size: int = 0

    @classmethod
    def record(cls, output: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                order.append(t)
                continue
            if id(t) in seen or t.node is None:
                continue
            seen.add(id(t))
            stack.append((t, True))
            for parent in t.node.inputs:
                if parent.node is not None and id(parent) not in seen:
                    stack.append((parent, False))
        return cls(nodes=order, size=len(order))

    def run(self, output: Tensor) -> None:
        grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
        for t in reversed(self.nodes):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            self.visits += 1
            t.grad = g if t.grad is None else t.grad + g
            node = t.node
            assert node is not None
            for parent, pg in zip(node.inputs, node.backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if pg.shape != parent.shape:
                    raise ShapeError(
                        f"{node.op} backward produced {pg.shape} for input of shape {parent.shape}"
                    )
                pg = pg.astype(parent.data.dtype, copy=False)
                if parent.node is None:
                    parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
                else:
                    prev = grads.get(id(parent))
                    grads[id(parent)] = pg if prev is None else prev + pg
        if output.node is None and output.requires_grad:
            output.grad = np.ones_like(output.data)
        for t in self.nodes:
            t.node = None
        self.nodes = []
