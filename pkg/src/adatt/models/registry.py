"""Name -> architecture lookup used by the trainer, checkpoints and CLI."""

from __future__ import annotations

from dataclasses import asdict
from typing import Any

from .base import ConfigError, FrontendSpec, MultiTaskModel
from .baselines import BASELINE_KINDS, BaselineConfig, build_baseline
from .fusion import AdaTT, AdaTTSp, FusionConfig

ARCHITECTURES = ("adatt", "adatt_sp") + BASELINE_KINDS


def make_config(arch: str, **params: Any) -> FusionConfig | BaselineConfig:
    """Build the config dataclass for ``arch`` from plain keyword values."""
    if arch not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture {arch!r}; valid names: {', '.join(ARCHITECTURES)}")
    if arch in ("adatt", "adatt_sp"):
        return FusionConfig(**params)
    return BaselineConfig(kind=arch, **params)


def config_from_spec(
    arch: str,
    *,
    num_tasks: int,
    input_dim: int,
    dims: list[int],
    experts_per_task: int | list[int] = 1,
    shared_experts: int = 0,
    total_experts: int | None = None,
    tower_hidden_dim: int = 32,
    task_kinds: list[str] | None = None,
    ablate_native_fusion: bool = False,
) -> FusionConfig | BaselineConfig:
    """Translate the CLI's architecture-neutral knobs into ``arch``'s config.

    ``total_experts`` (MMoE family) defaults to ``T * experts_per_task +
    shared_experts`` so comparisons keep the expert budget equal.
    """
    if arch in ("adatt", "adatt_sp"):
        if arch == "adatt_sp" and shared_experts:
            raise ConfigError("adatt_sp has no shared experts")
        return FusionConfig(
            num_tasks=num_tasks,
            expert_hidden_dims=dims,
            input_dim=input_dim,
            experts_per_task=experts_per_task,
            shared_experts=shared_experts,
            tower_hidden_dim=tower_hidden_dim,
            task_kinds=task_kinds,
            ablate_native_fusion=ablate_native_fusion,
        )
    per_task = experts_per_task if isinstance(experts_per_task, int) else None
    if total_experts is None:
        per = [per_task] * num_tasks if per_task is not None else list(experts_per_task)
        total_experts = sum(per) + shared_experts
    return make_config(
        arch,
        num_tasks=num_tasks,
        input_dim=input_dim,
        hidden_dims=dims,
        num_experts=total_experts,
        experts_per_task=experts_per_task,
        shared_experts=shared_experts,
        tower_hidden_dim=tower_hidden_dim,
        task_kinds=task_kinds,
    )


def build_model(
    arch: str, config: FusionConfig | BaselineConfig, seed: int = 0, frontend: FrontendSpec | None = None
) -> MultiTaskModel:
    if arch == "adatt":
        return AdaTT(config, seed, frontend)
    if arch == "adatt_sp":
        return AdaTTSp(config, seed, frontend)
    if arch in BASELINE_KINDS:
        if config.kind != arch:
            raise ConfigError(f"config is for {config.kind!r}, not {arch!r}")
        return build_baseline(config, seed, frontend)
    raise ConfigError(f"unknown architecture {arch!r}; valid names: {', '.join(ARCHITECTURES)}")


def config_to_dict(config) -> dict[str, Any]:
    d = asdict(config)
    d.pop("kind", None)
    return d
