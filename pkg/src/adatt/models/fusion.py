"""Adaptive task-to-task fusion networks.

Each fusion level holds one unit per task (plus an optional shared unit).  A
task unit owns ``m_t`` experts fed by that task's previous-level output, a
gate over every expert at the level, and a learnt weight vector over its
native experts::

    f_t = softmax(W_t f_t_prev) . E  +  v_t . E_t

Experts are stacked in a fixed order: task 0's experts, ..., task T-1's
experts, then shared experts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..tensor import (
    Tensor,
    add,
    get_default_dtype,
    matmul,
    pad,
    slice_axis,
    softmax_rows,
    stack,
    transpose,
    weighted_sum,
)
from .base import ConfigError, Dense, FrontendSpec, MultiTaskModel, Tower, normalize_task_kinds

SHARED_FUSION_MODES = ("all", "shared")


@dataclass
class FusionConfig:
    num_tasks: int
    expert_hidden_dims: list[int]
    input_dim: int
    experts_per_task: list[int] | int = 1
    shared_experts: int = 0
    tower_hidden_dim: int = 32
    task_kinds: list[str] | None = None
    ablate_native_fusion: bool = False
    # what a non-final shared unit's gate covers: every expert, or shared ones only
    shared_fusion: str = "all"
    # combine gate and native weights before a single expert reduction
    fast_fusion: bool = True
    num_levels: int | None = None

    def __post_init__(self):
        if self.num_tasks < 1:
            raise ConfigError("num_tasks must be positive")
        self.expert_hidden_dims = [int(d) for d in self.expert_hidden_dims]
        if not self.expert_hidden_dims:
            raise ConfigError("expert_hidden_dims needs at least one level")
        if self.num_levels is None:
            self.num_levels = len(self.expert_hidden_dims)
        if self.num_levels != len(self.expert_hidden_dims):
            raise ConfigError(
                f"num_levels={self.num_levels} but {len(self.expert_hidden_dims)} expert dims given"
            )
        if isinstance(self.experts_per_task, int):
            self.experts_per_task = [self.experts_per_task] * self.num_tasks
        self.experts_per_task = [int(m) for m in self.experts_per_task]
        if len(self.experts_per_task) != self.num_tasks:
            raise ConfigError("experts_per_task needs one entry per task")
        if any(m < 1 for m in self.experts_per_task):
            raise ConfigError("every task needs at least one expert")
        if self.shared_experts < 0:
            raise ConfigError("shared_experts must be >= 0")
        if self.input_dim < 1 or self.tower_hidden_dim < 1 or any(d < 1 for d in self.expert_hidden_dims):
            raise ConfigError("all dimensions must be >= 1")
        if self.shared_fusion not in SHARED_FUSION_MODES:
            raise ConfigError(f"shared_fusion must be one of {SHARED_FUSION_MODES}")
        self.task_kinds = normalize_task_kinds(self.task_kinds, self.num_tasks)

    @property
    def is_sp(self) -> bool:
        return self.shared_experts == 0

    @property
    def total_experts(self) -> int:
        return sum(self.experts_per_task) + self.shared_experts

    def expert_offsets(self) -> list[int]:
        """Start index of each task's (and finally the shared) block in the stack."""
        offsets = [0]
        for m in self.experts_per_task:
            offsets.append(offsets[-1] + m)
        return offsets


@dataclass
class FusionUnitParams:
    owner: int | str  # task index or "shared"
    experts: list[Dense]
    gate: Tensor | None
    native: Tensor | None
    # "learned": v weights; "unit": single native expert at weight 1; "none": gate only
    native_mode: str
    native_span: tuple[int, int]
    gate_span: tuple[int, int]

    @property
    def fuses(self) -> bool:
        return self.gate is not None


@dataclass
class LevelActivations:
    experts: Tensor  # [B, K, d]
    labels: list[str] = field(default_factory=list)


def _native_weights(unit: FusionUnitParams) -> Tensor | None:
    if unit.native_mode == "learned":
        return unit.native
    if unit.native_mode == "unit":
        return Tensor(np.ones(1, dtype=get_default_dtype()))
    return None


def _check_level(unit: FusionUnitParams, level: LevelActivations) -> None:
    k = level.experts.shape[1]
    lo, hi = unit.gate_span
    if hi > k or unit.native_span[1] > k or unit.gate.shape[0] != hi - lo:
        raise ConfigError(
            f"unit {unit.owner}: gate has {unit.gate.shape[0]} rows for span {unit.gate_span}, "
            f"level has {k} experts"
        )


def _gate(unit: FusionUnitParams, own_prev: Tensor, level: LevelActivations) -> Tensor:
    _check_level(unit, level)
    return softmax_rows(matmul(own_prev, transpose(unit.gate)))


def fusion_unit_forward(unit: FusionUnitParams, own_prev: Tensor, level: LevelActivations) -> Tensor:
    """Two-term fusion: gated sum over the gate span plus the native linear term."""
    _check_level(unit, level)
    lo, hi = unit.gate_span
    experts = level.experts
    span = experts if (lo, hi) == (0, experts.shape[1]) else slice_axis(experts, lo, hi, axis=1)
    out = weighted_sum(_gate(unit, own_prev, level), span)
    v = _native_weights(unit)
    if v is not None:
        a, b = unit.native_span
        out = add(out, weighted_sum(v, slice_axis(experts, a, b, axis=1)))
    return out


def combined_weights(unit: FusionUnitParams, own_prev: Tensor, level: LevelActivations) -> tuple[Tensor, Tensor]:
    """Per-example weights over the whole expert stack: gate plus zero-padded
    native weights.  Returns ``(combined [B, K], gate [B, K])``."""
    k = level.experts.shape[1]
    lo, hi = unit.gate_span
    gate = _gate(unit, own_prev, level)
    if (lo, hi) != (0, k):
        gate = pad(gate, lo, k - hi)
    v = _native_weights(unit)
    if v is None:
        return gate, gate
    a, b = unit.native_span
    return add(gate, pad(v, a, k - b)), gate


def fusion_unit_forward_fast(unit: FusionUnitParams, own_prev: Tensor, level: LevelActivations) -> Tensor:
    """Single reduction with ``pad(v) + G`` as the expert weights."""
    weights, _ = combined_weights(unit, own_prev, level)
    return weighted_sum(weights, level.experts)


class _FusionNetwork(MultiTaskModel):
    def __init__(self, config: FusionConfig, seed: int = 0, frontend: FrontendSpec | None = None):
        super().__init__(config, seed, frontend)
        cfg = config
        store = self.store
        offsets = cfg.expert_offsets()
        k = cfg.total_experts
        self.levels: list[list[FusionUnitParams]] = []
        self.shared_units: list[FusionUnitParams | None] = []
        self.expert_labels = [f"task{t}/expert{i}" for t, m in enumerate(cfg.experts_per_task) for i in range(m)]
        self.expert_labels += [f"shared/expert{i}" for i in range(cfg.shared_experts)]
        fan_in = cfg.input_dim
        for lv, dim in enumerate(cfg.expert_hidden_dims, start=1):
            final = lv == cfg.num_levels
            units = []
            for t, m in enumerate(cfg.experts_per_task):
                prefix = f"level{lv}/task{t}"
                experts = [Dense.create(store, f"{prefix}/expert{i}", fan_in, dim) for i in range(m)]
                gate = store.gate(f"{prefix}/gate", k, fan_in)
                native = None
                if cfg.ablate_native_fusion:
                    mode = "none"
                elif m == 1:
                    mode = "unit"
                else:
                    mode = "learned"
                    bound = 1.0 / math.sqrt(m)
                    native = store.add(f"{prefix}/native", store.rng.uniform(-bound, bound, size=m))
                units.append(
                    FusionUnitParams(t, experts, gate, native, mode, (offsets[t], offsets[t + 1]), (0, k))
                )
            shared = None
            if cfg.shared_experts:
                prefix = f"level{lv}/shared"
                experts = [Dense.create(store, f"{prefix}/expert{i}", fan_in, dim) for i in range(cfg.shared_experts)]
                span = (0, k) if cfg.shared_fusion == "all" else (offsets[-1], k)
                gate = None if final else store.gate(f"{prefix}/gate", span[1] - span[0], fan_in)
                shared = FusionUnitParams("shared", experts, gate, None, "none", (offsets[-1], k), span)
            self.levels.append(units)
            self.shared_units.append(shared)
            fan_in = dim
        self.towers = [Tower.create(store, t, fan_in, cfg.tower_hidden_dim) for t in range(cfg.num_tasks)]

    def _fuse(self, unit, own_prev, level, capture):
        if capture is not None:
            weights, gate = combined_weights(unit, own_prev, level)
            capture.append((unit.owner, weights.data, gate.data))
            return weighted_sum(weights, level.experts)
        if self.config.fast_fusion:
            return fusion_unit_forward_fast(unit, own_prev, level)
        return fusion_unit_forward(unit, own_prev, level)

    def _expert_outputs(self, units: Sequence[FusionUnitParams], inputs: Sequence[Tensor]) -> LevelActivations:
        outs = [expert(x) for unit, x in zip(units, inputs) for expert in unit.experts]
        return LevelActivations(stack(outs, axis=1), self.expert_labels)

    def forward_levels(self, x: Tensor, capture: list | None = None) -> list[Tensor]:
        raise NotImplementedError

    def forward(self, x, capture: list | None = None) -> list[Tensor]:
        """``capture``, when given a list, receives per level a list of
        ``(owner, combined_weights, gate_weights)`` numpy arrays."""
        final = self.forward_levels(self.embed(x), capture)
        return [tower(f) for tower, f in zip(self.towers, final)]


class AdaTTSp(_FusionNetwork):
    """Task-specific fusion units only."""

    kind = "adatt_sp"

    def __init__(self, config: FusionConfig, seed: int = 0, frontend: FrontendSpec | None = None):
        if not config.is_sp:
            raise ConfigError("AdaTTSp takes no shared experts; use AdaTT")
        super().__init__(config, seed, frontend)

    def forward_levels(self, x, capture=None):
        prev = [x] * self.num_tasks
        for units in self.levels:
            level = self._expert_outputs(units, prev)
            caught = [] if capture is not None else None
            prev = [self._fuse(u, p, level, caught) for u, p in zip(units, prev)]
            if capture is not None:
                capture.append(caught)
        return prev


class AdaTT(_FusionNetwork):
    """General form with an optional shared fusion unit per level.  The final
    level's shared unit only contributes expert outputs."""

    kind = "adatt"

    def forward_levels(self, x, capture=None):
        prev = [x] * self.num_tasks
        shared_prev = x
        for units, shared in zip(self.levels, self.shared_units):
            all_units = units + ([shared] if shared is not None else [])
            inputs = prev + ([shared_prev] if shared is not None else [])
            level = self._expert_outputs(all_units, inputs)
            caught = [] if capture is not None else None
            outputs = [self._fuse(u, p, level, caught) for u, p in zip(all_units, inputs) if u.fuses]
            if capture is not None:
                capture.append(caught)
            prev = outputs[: self.num_tasks]
            if shared is not None and shared.fuses:
                shared_prev = outputs[self.num_tasks]
        return prev


def build_adatt(config: FusionConfig, rng_seed: int = 0, frontend: FrontendSpec | None = None) -> _FusionNetwork:
    """AdaTT-sp when there are no shared experts, general AdaTT otherwise."""
    cls = AdaTTSp if config.is_sp else AdaTT
    return cls(config, rng_seed, frontend)
