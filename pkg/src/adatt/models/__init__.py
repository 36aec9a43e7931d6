from .base import (
    ConfigError,
    EmbeddingFrontend,
    FrontendSpec,
    MultiTaskModel,
    UnsupportedArchitectureError,
)
from .baselines import BASELINE_KINDS, PLE, BaselineConfig, CrossStitch, MLMMoE, MMoE, SharedBottom, build_baseline
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .fusion import (
    AdaTT,
    AdaTTSp,
    FusionConfig,
    FusionUnitParams,
    LevelActivations,
    build_adatt,
    combined_weights,
    fusion_unit_forward,
    fusion_unit_forward_fast,
)
from .registry import ARCHITECTURES, build_model, config_from_spec, make_config

__all__ = [
    "ARCHITECTURES",
    "BASELINE_KINDS",
    "AdaTT",
    "AdaTTSp",
    "BaselineConfig",
    "CheckpointError",
    "ConfigError",
    "CrossStitch",
    "EmbeddingFrontend",
    "FrontendSpec",
    "FusionConfig",
    "FusionUnitParams",
    "LevelActivations",
    "MLMMoE",
    "MMoE",
    "MultiTaskModel",
    "PLE",
    "SharedBottom",
    "UnsupportedArchitectureError",
    "build_adatt",
    "build_baseline",
    "build_model",
    "combined_weights",
    "config_from_spec",
    "fusion_unit_forward",
    "fusion_unit_forward_fast",
    "load_checkpoint",
    "make_config",
    "save_checkpoint",
]
