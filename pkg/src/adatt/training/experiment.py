"""Seeded multi-run experiments, results files and the native-fusion ablation pair."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..data.batch import TaskBatch
from ..models.base import FrontendSpec
from ..models.checkpoint import save_checkpoint
from ..models.registry import build_model, config_to_dict
from .trainer import TrainConfig, evaluate, train

log = logging.getLogger(__name__)


@dataclass
class DataSplits:
    train: TaskBatch
    valid: TaskBatch
    test: TaskBatch
    frontend: FrontendSpec | None = None


@dataclass
class ExperimentResult:
    arch: str
    fingerprint: str
    seeds: list[int]
    runs: list[dict[str, Any]]
    summary: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)
    wall_clock: float = 0.0

    def mean(self, task: str, metric: str = "auc") -> float:
        return self.summary[task][metric]["mean"]

    def std(self, task: str, metric: str = "auc") -> float:
        return self.summary[task][metric]["std"]

    @property
    def task_names(self) -> list[str]:
        return list(self.summary)


def fingerprint(arch: str, arch_config, train_config: TrainConfig) -> str:
    payload = {"arch": arch, "model": config_to_dict(arch_config), "train": dataclasses.asdict(train_config)}
    payload["train"].pop("seed", None)
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def summarize(runs: Sequence[dict[str, Any]]) -> dict[str, dict[str, dict[str, float]]]:
    """Mean and sample std (ddof=1; 0 for one run) of every test metric."""
    out: dict[str, dict[str, dict[str, float]]] = {}
    for task in runs[0]["test"]:
        out[task] = {}
        for metric in runs[0]["test"][task]:
            vals = np.array([r["test"][task][metric] for r in runs], dtype=np.float64)
            out[task][metric] = {
                "mean": float(np.mean(vals)),
                "std": float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0,
                "n": int(len(vals)),
            }
    return out


def run_seed(arch: str, arch_config, train_config: TrainConfig, data: DataSplits, seed: int) -> dict[str, Any]:
    """Build with ``seed``, train with ``seed`` driving the shuffles, evaluate the
    selected model on the test split."""
    start = time.perf_counter()
    model = build_model(arch, arch_config, seed, data.frontend)
    cfg = dataclasses.replace(train_config, seed=seed)
    result = train(model, data.train, data.valid, cfg)
    test = evaluate(model, data.test, cfg.eval_batch_size)
    return {
        "seed": seed,
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.history),
        "valid_score": result.best_score,
        "valid": result.history[result.best_epoch - 1].get("valid", {}) if result.best_epoch else {},
        "valid_curve": [rec["score"] for rec in result.history],
        "test": test,
        "wall_clock": time.perf_counter() - start,
        "_model": model,
    }


def _job(args):
    *core, checkpoint_dir, extra = args
    run = run_seed(*core)
    model = run.pop("_model")
    if checkpoint_dir is not None:
        path = Path(checkpoint_dir) / f"model_seed{run['seed']}.ckpt"
        save_checkpoint(model, path, {**(extra or {}), "seed": run["seed"], "test": run["test"]})
        run["checkpoint"] = str(path)
    return run


def run_experiment(
    arch: str,
    arch_config,
    train_config: TrainConfig,
    n_seeds: int,
    data: DataSplits,
    *,
    seeds: Sequence[int] | None = None,
    workers: int = 1,
    results_path: str | Path | None = None,
    checkpoint_dir: str | Path | None = None,
    checkpoint_extra: dict[str, Any] | None = None,
) -> ExperimentResult:
    """Train ``n_seeds`` independent runs (seeds ``0..n_seeds-1`` unless given).

    With ``checkpoint_dir`` each run's selected model is saved as
    ``model_seed{s}.ckpt`` with ``checkpoint_extra`` in its header.
    """
    seeds = list(range(n_seeds)) if seeds is None else list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    fp = fingerprint(arch, arch_config, train_config)
    start = time.perf_counter()
    jobs = [(arch, arch_config, train_config, data, s, checkpoint_dir, checkpoint_extra) for s in seeds]
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_job, jobs))
    else:
        runs = []
        for job in jobs:
            runs.append(_job(job))
            log.info("%s seed %d: %s", arch, runs[-1]["seed"], runs[-1]["test"])
    res = ExperimentResult(arch, fp, seeds, runs, summarize(runs), time.perf_counter() - start)
    if results_path is not None:
        write_results(res, results_path)
    return res


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_results(result: ExperimentResult, path: str | Path, extra: dict[str, Any] | None = None) -> Path:
    """One JSON line per seed, then a summary line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for run in result.runs:
            rec = {"type": "seed", "arch": result.arch, "fingerprint": result.fingerprint}
            rec.update({k: v for k, v in run.items() if not k.startswith("_")})
            fh.write(json.dumps(_clean(rec), sort_keys=True) + "\n")
        summary = {
            "type": "summary",
            "arch": result.arch,
            "fingerprint": result.fingerprint,
            "seeds": result.seeds,
            "metrics": result.summary,
            "wall_clock": result.wall_clock,
        }
        if extra:
            summary.update(extra)
        fh.write(json.dumps(_clean(summary), sort_keys=True) + "\n")
    return path


def read_results(path: str | Path) -> list[dict[str, Any]]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


@dataclass
class AblationResult:
    full: ExperimentResult
    ablated: ExperimentResult
    # task -> metric -> percent change, positive = the ablated model is worse
    degradation_pct: dict[str, dict[str, float]]

    def degraded_tasks(self, metric: str = "auc") -> list[str]:
        return [t for t, d in self.degradation_pct.items() if d.get(metric, 0.0) > 0]


HIGHER_IS_BETTER = {"auc": True, "ne": False, "mse": False, "loss": False}


def degradation(full: dict[str, dict[str, dict[str, float]]], ablated) -> dict[str, dict[str, float]]:
    out = {}
    for task, metrics in full.items():
        out[task] = {}
        for metric, stats in metrics.items():
            a, b = stats["mean"], ablated[task][metric]["mean"]
            if a == 0 or not (math.isfinite(a) and math.isfinite(b)):
                continue
            sign = 1.0 if HIGHER_IS_BETTER.get(metric, False) else -1.0
            out[task][metric] = sign * (a - b) / abs(a) * 100.0
    return out


def run_ablation(
    arch_config,
    train_config: TrainConfig,
    n_seeds: int,
    data: DataSplits,
    *,
    arch: str = "adatt",
    seeds: Sequence[int] | None = None,
    workers: int = 1,
) -> AblationResult:
    """Full vs. gate-only fusion on shared seeds."""
    full_cfg = dataclasses.replace(arch_config, ablate_native_fusion=False)
    abl_cfg = dataclasses.replace(arch_config, ablate_native_fusion=True)
    full = run_experiment(arch, full_cfg, train_config, n_seeds, data, seeds=seeds, workers=workers)
    ablated = run_experiment(arch, abl_cfg, train_config, n_seeds, data, seeds=seeds, workers=workers)
    return AblationResult(full, ablated, degradation(full.summary, ablated.summary))
