"""Shared model plumbing: parameter registry, dense layers, task towers, input
front end and the architecture-agnostic :class:`MultiTaskModel` interface."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from ..tensor import ShapeError, Tensor, add, concat, embedding, get_default_dtype, matmul, relu

TASK_KINDS = ("classification", "regression")
HEAD_GAIN = 0.1


class ConfigError(ValueError):
    """An architecture description is invalid."""


class UnsupportedArchitectureError(TypeError):
    """The requested analysis does not apply to this architecture."""


class ParamStore:
    """Ordered name -> Tensor mapping that also owns the initialisation RNG."""

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)
        self.tensors: dict[str, Tensor] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.tensors:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data, dtype=get_default_dtype()), requires_grad=True, name=name)
        self.tensors[name] = t
        return t

    def weight(self, name: str, fan_in: int, fan_out: int, gain: float = math.sqrt(2.0)) -> Tensor:
        """Kaiming-uniform, fan-in mode; the default gain suits a following ReLU."""
        bound = gain * math.sqrt(3.0 / fan_in)
        return self.add(name, self.rng.uniform(-bound, bound, size=(fan_in, fan_out)))

    def gate(self, name: str, num_experts: int, fan_in: int) -> Tensor:
        """Gate matrix stored as ``[num_experts, fan_in]``; no ReLU follows, so gain 1."""
        bound = math.sqrt(3.0 / fan_in)
        return self.add(name, self.rng.uniform(-bound, bound, size=(num_experts, fan_in)))

    def bias(self, name: str, n: int) -> Tensor:
        return self.add(name, np.zeros(n))


@dataclass
class Dense:
    w: Tensor
    b: Tensor
    activate: bool = True

    @classmethod
    def create(cls, store: ParamStore, prefix: str, fan_in: int, fan_out: int, activate: bool = True, gain=None):
        gain = (math.sqrt(2.0) if activate else 1.0) if gain is None else gain
        return cls(store.weight(f"{prefix}/w", fan_in, fan_out, gain), store.bias(f"{prefix}/b", fan_out), activate)

    def __call__(self, x: Tensor) -> Tensor:
        y = add(matmul(x, self.w), self.b)
        return relu(y) if self.activate else y


def mlp(store: ParamStore, prefix: str, fan_in: int, dims: Sequence[int]) -> list[Dense]:
    layers = []
    for j, d in enumerate(dims):
        layers.append(Dense.create(store, f"{prefix}/layer{j}", fan_in, d))
        fan_in = d
    return layers


def run_layers(layers: Sequence[Dense], x: Tensor) -> Tensor:
    for layer in layers:
        x = layer(x)
    return x


@dataclass
class Tower:
    """One ReLU hidden layer followed by a width-1 linear head."""

    hidden: Dense
    out: Dense

    @classmethod
    def create(cls, store: ParamStore, task: int, fan_in: int, hidden_dim: int) -> "Tower":
        return cls(
            Dense.create(store, f"tower{task}/hidden", fan_in, hidden_dim),
            # small head so an untrained model predicts close to p = 0.5
            Dense.create(store, f"tower{task}/out", hidden_dim, 1, activate=False, gain=HEAD_GAIN),
        )

    def __call__(self, x: Tensor) -> Tensor:
        return self.out(self.hidden(x))


@dataclass
class FrontendSpec:
    """Input layout: ``dense_dim`` numeric columns followed by one learned
    embedding per categorical column."""

    dense_dim: int
    cardinalities: list[int] = field(default_factory=list)
    embedding_dims: list[int] = field(default_factory=list)
    column_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.cardinalities) != len(self.embedding_dims):
            raise ConfigError("cardinalities and embedding_dims differ in length")
        if not self.column_names:
            self.column_names = [f"cat{i}" for i in range(len(self.cardinalities))]

    @property
    def output_dim(self) -> int:
        return self.dense_dim + sum(self.embedding_dims)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class EmbeddingFrontend:
    def __init__(self, spec: FrontendSpec, store: ParamStore):
        self.spec = spec
        self.tables = [
            store.add(f"embed/{name}", store.rng.uniform(-0.05, 0.05, size=(card, dim)))
            for name, card, dim in zip(spec.column_names, spec.cardinalities, spec.embedding_dims)
        ]

    def __call__(self, dense: np.ndarray, categorical: np.ndarray) -> Tensor:
        parts = []
        if self.spec.dense_dim:
            parts.append(Tensor(np.asarray(dense, dtype=get_default_dtype())))
        for j, table in enumerate(self.tables):
            parts.append(embedding(table, categorical[:, j]))
        return parts[0] if len(parts) == 1 else concat(parts, axis=1)


def normalize_task_kinds(kinds: Sequence[str] | None, num_tasks: int) -> list[str]:
    kinds = list(kinds) if kinds else ["classification"] * num_tasks
    if len(kinds) != num_tasks:
        raise ConfigError(f"task_kinds has {len(kinds)} entries for {num_tasks} tasks")
    for k in kinds:
        if k not in TASK_KINDS:
            raise ConfigError(f"unknown task kind {k!r}; expected one of {TASK_KINDS}")
    return kinds


class MultiTaskModel:
    """Common interface: ``model(x)`` returns one ``[B, 1]`` output per task.

    ``x`` is a dense ``Tensor``/array of width ``input_dim`` or, when the model
    has an embedding front end, any object with ``dense`` and ``categorical``
    arrays.
    """

    kind: str = ""

    def __init__(self, config, seed: int, frontend: FrontendSpec | None = None):
        self.config = config
        self.seed = seed
        self.frontend_spec = frontend
        self.store = ParamStore(seed)
        self.task_kinds = list(config.task_kinds)
        self.num_tasks = config.num_tasks
        self.frontend = None
        if frontend is not None:
            if frontend.output_dim != config.input_dim:
                raise ConfigError(
                    f"front end produces {frontend.output_dim} features but input_dim is {config.input_dim}"
                )
            self.frontend = EmbeddingFrontend(frontend, self.store)

    # parameters ---------------------------------------------------------
    def named_parameters(self) -> dict[str, Tensor]:
        return self.store.tensors

    def parameters(self) -> list[Tensor]:
        return list(self.store.tensors.values())

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.store.tensors.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = self.store.tensors
        missing = set(own) - set(state)
        unknown = set(state) - set(own)
        if missing or unknown:
            raise ConfigError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unknown)}")
        for k, arr in state.items():
            if own[k].shape != tuple(arr.shape):
                raise ConfigError(f"{k}: shape {tuple(arr.shape)} != {own[k].shape}")
            own[k].data[...] = arr

    # forward ------------------------------------------------------------
    def embed(self, x) -> Tensor:
        if self.frontend is not None and hasattr(x, "categorical"):
            return self.frontend(x.dense, x.categorical)
        if hasattr(x, "categorical"):
            x = x.dense
        t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=get_default_dtype()))
        if t.data.ndim != 2 or t.shape[1] != self.config.input_dim:
            raise ShapeError(f"input has shape {t.shape}; model expects width {self.config.input_dim}")
        return t

    def forward(self, x) -> list[Tensor]:
        raise NotImplementedError

    def __call__(self, x, **kwargs) -> list[Tensor]:
        return self.forward(x, **kwargs)

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind, "config": asdict(self.config), "num_parameters": self.num_parameters()}
