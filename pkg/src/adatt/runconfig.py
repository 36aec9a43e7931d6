"""Run configuration: defaults, YAML files, dotted overrides, and the data
and model objects a resolved configuration describes."""

from __future__ import annotations

import copy
import os
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from .data.census import STANDARD_COUNTS, DataError, load_census, load_layout
from .data.encoding import FeatureEncoder, encode_batch
from .data.synthetic import synthetic_splits
from .models.base import ConfigError
from .models.registry import ARCHITECTURES, config_from_spec
from .training.experiment import DataSplits
from .training.trainer import TrainConfig

DATA_DIR_ENV = "ADATT_DATA_DIR"

# expert hidden sizes per level count for the depth study
DEPTH_DIMS = {
    2: [256, 128],
    3: [512, 256, 128],
    4: [1024, 512, 256, 128],
    5: [2048, 1024, 512, 256, 128],
}

DEFAULTS: dict[str, Any] = {
    "arch": None,
    "model": {
        "experts_per_task": 1,
        "shared_experts": 0,
        "total_experts": None,
        "dims": [128, 64],
        "tower_hidden_dim": 32,
        "ablate_native_fusion": False,
    },
    # per-architecture model overrides, applied after "model"
    "arch_overrides": {},
    "train": {
        "learning_rate": 1e-3,
        "batch_size": 256,
        "max_epochs": 30,
        "patience": 3,
        "eval_batch_size": 8192,
    },
    "data": {
        "dataset": "census",
        "data_dir": None,
        "train_file": "census-income.data",
        "test_file": "census-income.test",
        "split_seed": 0,
        "allow_partial": False,
        "layout": None,
        "synthetic": {
            "seed": 0,
            "num_tasks": 2,
            "n_train": 20000,
            "n_valid": 5000,
            "n_test": 5000,
            "dim": 16,
            "rho": 0.5,
            "label_noise": 0.3,
        },
    },
    "seeds": [0],
    "workers": 1,
    "sweep": {"param": "experts", "values": None, "dim_divisor": 1},
}


def deep_merge(base: Mapping[str, Any], over: Mapping[str, Any]) -> dict[str, Any]:
    out = copy.deepcopy(dict(base))
    for key, value in over.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def packaged_configs() -> list[str]:
    files = resources.files("adatt.configs").iterdir()
    return sorted(f.name[: -len(".yaml")] for f in files if f.name.endswith(".yaml"))


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Read a YAML config; a bare name such as ``census_6experts`` selects a
    packaged config when no such file exists."""
    try:
        if not Path(path).exists() and str(path) in packaged_configs():
            text = resources.files("adatt.configs").joinpath(f"{path}.yaml").read_text()
        else:
            with open(path) as fh:
                text = fh.read()
        loaded = yaml.safe_load(text) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path} (packaged: {', '.join(packaged_configs())})") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    if not isinstance(loaded, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return loaded


def parse_override(item: str) -> tuple[list[str], Any]:
    """``a.b.c=value`` -> (["a", "b", "c"], parsed YAML value)."""
    key, sep, raw = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override {item!r} is not of the form key=value")
    return key.strip().split("."), yaml.safe_load(raw) if raw.strip() else None


def set_path(cfg: dict[str, Any], keys: Sequence[str], value: Any) -> None:
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value


def resolve(
    file_cfg: Mapping[str, Any] | None = None,
    overrides: Sequence[str] = (),
    flags: Mapping[str, Any] | None = None,
) -> dict[str, Any]:
    """Defaults, then the config file, then ``--set`` overrides, then
    explicit flags (``flags`` maps dotted keys to values; None is skipped)."""
    cfg = deep_merge(DEFAULTS, file_cfg or {})
    for item in overrides:
        keys, value = parse_override(item)
        set_path(cfg, keys, value)
    for dotted, value in (flags or {}).items():
        if value is not None:
            set_path(cfg, dotted.split("."), value)
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
    if cfg["arch"] is not None and cfg["arch"] not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture {cfg['arch']!r}; valid names: {', '.join(ARCHITECTURES)}")
    seeds = cfg["seeds"]
    cfg["seeds"] = [int(s) for s in (seeds if isinstance(seeds, list) else [seeds])]
    if not cfg["seeds"]:
        raise ConfigError("need at least one seed")
    return cfg


def model_settings(cfg: Mapping[str, Any]) -> dict[str, Any]:
    settings = dict(cfg["model"])
    settings.update((cfg.get("arch_overrides") or {}).get(cfg["arch"], {}) or {})
    return settings


def build_arch_config(cfg: Mapping[str, Any], num_tasks: int, input_dim: int, task_kinds: Sequence[str]):
    m = model_settings(cfg)
    unknown = set(m) - set(DEFAULTS["model"]) - {"levels"}
    if unknown:
        raise ConfigError(f"unknown model settings: {', '.join(sorted(unknown))}")
    dims = [int(d) for d in m["dims"]]
    levels = m.get("levels")
    if levels is not None and int(levels) != len(dims):
        raise ConfigError(f"levels={levels} but dims has {len(dims)} entries ({dims})")
    return config_from_spec(
        cfg["arch"],
        num_tasks=num_tasks,
        input_dim=input_dim,
        dims=dims,
        experts_per_task=m["experts_per_task"],
        shared_experts=int(m["shared_experts"]),
        total_experts=m["total_experts"],
        tower_hidden_dim=int(m["tower_hidden_dim"]),
        task_kinds=list(task_kinds),
        ablate_native_fusion=bool(m["ablate_native_fusion"]),
    )


def train_config(cfg: Mapping[str, Any]) -> TrainConfig:
    t = cfg["train"]
    unknown = set(t) - set(DEFAULTS["train"])
    if unknown:
        raise ConfigError(f"unknown train settings: {', '.join(sorted(unknown))}")
    return TrainConfig(
        learning_rate=float(t["learning_rate"]),
        batch_size=int(t["batch_size"]),
        max_epochs=int(t["max_epochs"]),
        patience=int(t["patience"]),
        eval_batch_size=int(t["eval_batch_size"]),
    )


def census_paths(data_cfg: Mapping[str, Any]) -> tuple[Path, Path]:
    root = data_cfg.get("data_dir") or os.environ.get(DATA_DIR_ENV)
    if not root:
        raise DataError(f"census data directory not set; pass --data-dir or set {DATA_DIR_ENV}")
    root = Path(root)
    paths = root / data_cfg["train_file"], root / data_cfg["test_file"]
    for p in paths:
        if not p.exists():
            raise DataError(f"census file not found: {p}")
    return paths


def load_data(data_cfg: Mapping[str, Any], encoder: FeatureEncoder | None = None) -> tuple[DataSplits, FeatureEncoder | None]:
    """Splits for the configured dataset.  Census features are encoded with
    ``encoder`` when given, else with one fitted on the training split."""
    kind = data_cfg["dataset"]
    if kind == "synthetic":
        s = data_cfg["synthetic"]
        tr, va, te = synthetic_splits(
            int(s["seed"]), int(s["n_train"]), int(s["n_valid"]), int(s["n_test"]),
            int(s["dim"]), float(s["rho"]), float(s["label_noise"]), num_tasks=int(s["num_tasks"]),
        )
        return DataSplits(tr, va, te), None
    if kind != "census":
        raise ConfigError(f"unknown dataset {kind!r}; expected census or synthetic")
    layout = load_layout(data_cfg.get("layout"))
    train_path, test_path = census_paths(data_cfg)
    counts = None if data_cfg.get("allow_partial") else STANDARD_COUNTS
    train, valid, test = load_census(train_path, test_path, int(data_cfg["split_seed"]), counts, layout)
    if encoder is None:
        encoder = FeatureEncoder.for_layout(layout).fit(train)
    splits = DataSplits(
        encode_batch(encoder, train, layout),
        encode_batch(encoder, valid, layout),
        encode_batch(encoder, test, layout),
        encoder.frontend_spec(),
    )
    return splits, encoder


def input_dim_of(splits: DataSplits) -> int:
    if splits.frontend is not None:
        return splits.frontend.output_dim
    return splits.train.features.dense.shape[1]


def dump_config(cfg: Mapping[str, Any], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        yaml.safe_dump(dict(cfg), fh, sort_keys=True, default_flow_style=None)
    return path
