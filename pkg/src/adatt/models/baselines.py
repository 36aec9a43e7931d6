"""Comparison architectures: shared-bottom, MMoE, multi-level MMoE,
cross-stitch and PLE, all on the same model interface as AdaTT."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor import (
    Tensor,
    concat,
    matmul,
    reshape,
    slice_axis,
    softmax_rows,
    stack,
    transpose,
    weighted_sum,
)
from .base import (
    ConfigError,
    Dense,
    FrontendSpec,
    MultiTaskModel,
    Tower,
    mlp,
    normalize_task_kinds,
    run_layers,
)

BASELINE_KINDS = ("shared_bottom", "mmoe", "ml_mmoe", "cross_stitch", "ple")


@dataclass
class BaselineConfig:
    """``hidden_dims`` means, per kind: shared-bottom layers, MMoE expert MLP
    layers, one single-layer expert level each for ML-MMoE/PLE, and each task's
    sub-network layers for cross-stitch."""

    kind: str
    num_tasks: int
    input_dim: int
    hidden_dims: list[int]
    num_experts: int = 1
    experts_per_task: list[int] | int = 1
    shared_experts: int = 0
    tower_hidden_dim: int = 32
    task_kinds: list[str] | None = None
    stitch_noise: float = 0.01

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ConfigError(f"unknown baseline {self.kind!r}; expected one of {BASELINE_KINDS}")
        if self.num_tasks < 1:
            raise ConfigError("num_tasks must be positive")
        self.hidden_dims = [int(d) for d in self.hidden_dims]
        if not self.hidden_dims or any(d < 1 for d in self.hidden_dims):
            raise ConfigError("hidden_dims must be a non-empty list of positive sizes")
        if self.input_dim < 1 or self.tower_hidden_dim < 1:
            raise ConfigError("all dimensions must be >= 1")
        if isinstance(self.experts_per_task, int):
            self.experts_per_task = [self.experts_per_task] * self.num_tasks
        self.experts_per_task = [int(m) for m in self.experts_per_task]
        if self.kind in ("mmoe", "ml_mmoe") and self.num_experts < 1:
            raise ConfigError(f"{self.kind} needs num_experts >= 1")
        if self.kind == "ple":
            if len(self.experts_per_task) != self.num_tasks or any(m < 1 for m in self.experts_per_task):
                raise ConfigError("ple needs at least one expert per task")
            if self.shared_experts < 1:
                raise ConfigError("ple requires at least one shared expert")
        self.task_kinds = normalize_task_kinds(self.task_kinds, self.num_tasks)

    @property
    def num_levels(self) -> int:
        return len(self.hidden_dims)


def _gate(w: Tensor, x: Tensor) -> Tensor:
    return softmax_rows(matmul(x, transpose(w)))


class SharedBottom(MultiTaskModel):
    kind = "shared_bottom"

    def __init__(self, config: BaselineConfig, seed: int = 0, frontend: FrontendSpec | None = None):
        super().__init__(config, seed, frontend)
        self.bottom = mlp(self.store, "bottom", config.input_dim, config.hidden_dims)
        self.towers = [
            Tower.create(self.store, t, config.hidden_dims[-1], config.tower_hidden_dim) for t in range(config.num_tasks)
        ]

    def forward(self, x):
        h = run_layers(self.bottom, self.embed(x))
        return [tower(h) for tower in self.towers]


class MMoE(MultiTaskModel):
    """One level of shared MLP experts, one input-conditioned gate per task."""

    kind = "mmoe"

    def __init__(self, config: BaselineConfig, seed: int = 0, frontend: FrontendSpec | None = None):
        super().__init__(config, seed, frontend)
        s = self.store
        self.experts = [mlp(s, f"expert{i}", config.input_dim, config.hidden_dims) for i in range(config.num_experts)]
        self.gates = [s.gate(f"task{t}/gate", config.num_experts, config.input_dim) for t in range(config.num_tasks)]
        self.towers = [
            Tower.create(s, t, config.hidden_dims[-1], config.tower_hidden_dim) for t in range(config.num_tasks)
        ]

    def gate_weights(self, x: Tensor) -> list[Tensor]:
        return [_gate(w, x) for w in self.gates]

    def forward(self, x):
        x = self.embed(x)
        experts = stack([run_layers(e, x) for e in self.experts], axis=1)
        return [tower(weighted_sum(g, experts)) for tower, g in zip(self.towers, self.gate_weights(x))]


class MLMMoE(MultiTaskModel):
    """Stacked MMoE levels.  Below the top, level ``l`` has one gate per
    level-``l+1`` expert; the top level has one gate per task.  Every gate
    reads the raw input."""

    kind = "ml_mmoe"

    def __init__(self, config: BaselineConfig, seed: int = 0, frontend: FrontendSpec | None = None):
        super().__init__(config, seed, frontend)
        s = self.store
        n = config.num_experts
        self.levels: list[list[Dense]] = []
        self.gates: list[list[Tensor]] = []
        fan_in = config.input_dim
        for lv, dim in enumerate(config.hidden_dims, start=1):
            self.levels.append([Dense.create(s, f"level{lv}/expert{i}", fan_in, dim) for i in range(n)])
            if lv < config.num_levels:
                names = [f"level{lv}/gate{j}" for j in range(n)]
            else:
                names = [f"level{lv}/task{t}/gate" for t in range(config.num_tasks)]
            self.gates.append([s.gate(name, n, config.input_dim) for name in names])
            fan_in = dim
        self.towers = [Tower.create(s, t, fan_in, config.tower_hidden_dim) for t in range(config.num_tasks)]

    def forward(self, x):
        x = self.embed(x)
        inputs = [x] * self.config.num_experts
        for experts, gates in zip(self.levels, self.gates):
            stacked = stack([e(h) for e, h in zip(experts, inputs)], axis=1)
            inputs = [weighted_sum(_gate(w, x), stacked) for w in gates]
        return [tower(h) for tower, h in zip(self.towers, inputs)]


class CrossStitch(MultiTaskModel):
    """One sub-network per task; after every hidden layer a learnt ``T x T``
    matrix mixes the tasks' activations, the same for every example."""

    kind = "cross_stitch"

    def __init__(self, config: BaselineConfig, seed: int = 0, frontend: FrontendSpec | None = None):
        super().__init__(config, seed, frontend)
        s = self.store
        T = config.num_tasks
        self.layers: list[list[Dense]] = []
        self.stitches: list[Tensor] = []
        fan_in = config.input_dim
        for lv, dim in enumerate(config.hidden_dims, start=1):
            self.layers.append([Dense.create(s, f"level{lv}/task{t}", fan_in, dim) for t in range(T)])
            noise = s.rng.uniform(-config.stitch_noise, config.stitch_noise, size=(T, T))
            self.stitches.append(s.add(f"level{lv}/stitch", np.eye(T) + noise))
            fan_in = dim
        self.towers = [Tower.create(s, t, fan_in, config.tower_hidden_dim) for t in range(T)]

    def forward(self, x):
        x = self.embed(x)
        T = self.num_tasks
        hs = [x] * T
        for layers, alpha in zip(self.layers, self.stitches):
            stacked = stack([layer(h) for layer, h in zip(layers, hs)], axis=1)
            hs = [weighted_sum(reshape(slice_axis(alpha, t, t + 1, axis=0), (T,)), stacked) for t in range(T)]
        return [tower(h) for tower, h in zip(self.towers, hs)]


class PLE(MultiTaskModel):
    """Progressive separation routing: task units gate over their own plus the
    shared experts; the shared unit gates over all experts and is dropped at
    the top level."""

    kind = "ple"

    def __init__(self, config: BaselineConfig, seed: int = 0, frontend: FrontendSpec | None = None):
        super().__init__(config, seed, frontend)
        s = self.store
        m, ms = config.experts_per_task, config.shared_experts
        total = sum(m) + ms
        self.offsets = list(np.cumsum([0] + m))
        self.task_experts: list[list[list[Dense]]] = []
        self.shared_experts: list[list[Dense]] = []
        self.task_gates: list[list[Tensor]] = []
        self.shared_gates: list[Tensor | None] = []
        fan_in = config.input_dim
        for lv, dim in enumerate(config.hidden_dims, start=1):
            self.task_experts.append(
                [[Dense.create(s, f"level{lv}/task{t}/expert{i}", fan_in, dim) for i in range(m[t])] for t in range(config.num_tasks)]
            )
            self.shared_experts.append([Dense.create(s, f"level{lv}/shared/expert{i}", fan_in, dim) for i in range(ms)])
            self.task_gates.append([s.gate(f"level{lv}/task{t}/gate", m[t] + ms, fan_in) for t in range(config.num_tasks)])
            last = lv == config.num_levels
            self.shared_gates.append(None if last else s.gate(f"level{lv}/shared/gate", total, fan_in))
            fan_in = dim
        self.towers = [Tower.create(s, t, fan_in, config.tower_hidden_dim) for t in range(config.num_tasks)]

    def forward(self, x):
        x = self.embed(x)
        T = self.num_tasks
        prev, shared_prev = [x] * T, x
        for lv in range(self.config.num_levels):
            task_outs = [[e(prev[t]) for e in self.task_experts[lv][t]] for t in range(T)]
            shared_outs = [e(shared_prev) for e in self.shared_experts[lv]]
            shared_stack = stack(shared_outs, axis=1)
            new_prev = []
            for t in range(T):
                pool = concat([stack(task_outs[t], axis=1), shared_stack], axis=1)
                new_prev.append(weighted_sum(_gate(self.task_gates[lv][t], prev[t]), pool))
            w = self.shared_gates[lv]
            if w is not None:
                everything = stack([o for outs in task_outs for o in outs] + shared_outs, axis=1)
                shared_prev = weighted_sum(_gate(w, shared_prev), everything)
            prev = new_prev
        return [tower(h) for tower, h in zip(self.towers, prev)]


_CLASSES = {cls.kind: cls for cls in (SharedBottom, MMoE, MLMMoE, CrossStitch, PLE)}


def build_baseline(config: BaselineConfig, seed: int = 0, frontend: FrontendSpec | None = None) -> MultiTaskModel:
    return _CLASSES[config.kind](config, seed, frontend)
