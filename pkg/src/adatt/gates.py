"""Dataset-mean expert weights of fusion units, and their CSV export.

A task unit's weight on expert ``k`` for one example is its gate probability
plus, for native experts, the linear native weight.  Means are taken over
per-example combined weights.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data.batch import Features, TaskBatch
from .models.base import MultiTaskModel, UnsupportedArchitectureError
from .models.fusion import _FusionNetwork
from .tensor import no_grad


@dataclass
class WeightSnapshot:
    level: int
    weights: np.ndarray  # [units, K] mean combined weights
    gate: np.ndarray  # [units, K] mean gate part
    native: np.ndarray  # [units, K] native part
    n_examples: int
    expert_labels: list[str] = field(default_factory=list)
    unit_labels: list[str] = field(default_factory=list)


def capture_weights(
    model: MultiTaskModel,
    data: TaskBatch | Features,
    batch_size: int = 4096,
    include_shared: bool = False,
) -> list[WeightSnapshot]:
    """One snapshot per fusion level; rows follow task order (then the shared
    unit when ``include_shared``), columns follow the expert stacking order."""
    if not isinstance(model, _FusionNetwork):
        raise UnsupportedArchitectureError(
            f"{model.kind!r} has no fusion-unit gates; weight capture needs adatt or adatt_sp"
        )
    features = data.features if isinstance(data, TaskBatch) else data
    n = len(features)
    if n == 0:
        raise ValueError("cannot capture weights over an empty dataset")
    totals: list[dict] = []
    owners: list[list] = []
    with no_grad():
        for start in range(0, n, batch_size):
            part = features.subset(slice(start, start + batch_size))
            caught: list = []
            model(part, capture=caught)
            for lv, units in enumerate(caught):
                keep = [u for u in units if include_shared or u[0] != "shared"]
                if len(totals) <= lv:
                    totals.append({"w": 0.0, "g": 0.0})
                    owners.append([u[0] for u in keep])
                totals[lv]["w"] = totals[lv]["w"] + np.stack([u[1].sum(axis=0, dtype=np.float64) for u in keep])
                totals[lv]["g"] = totals[lv]["g"] + np.stack([u[2].sum(axis=0, dtype=np.float64) for u in keep])
    snaps = []
    for lv, tot in enumerate(totals):
        w, g = tot["w"] / n, tot["g"] / n
        labels = [f"task{o}" if o != "shared" else "shared" for o in owners[lv]]
        snaps.append(WeightSnapshot(lv + 1, w, g, w - g, n, list(model.expert_labels), labels))
    return snaps


def _write_matrix(path: Path, matrix: np.ndarray, columns: Sequence[str], rows: Sequence[str]) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["unit", *columns])
            for label, row in zip(rows, matrix):
                writer.writerow([label, *(f"{v:.6f}" for v in row)])
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc.strerror or exc}") from exc


def export_heatmap_data(
    snapshots: Sequence[WeightSnapshot], out_dir: str | Path, components: bool = False
) -> list[Path]:
    """Write ``gates_level{l}.csv`` per snapshot (and ``_gate``/``_native``
    component files when ``components``).  Returns the written paths."""
    if not snapshots:
        raise ValueError("no weight snapshots to export")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"could not create {out_dir}: {exc.strerror or exc}") from exc
    written = []
    for snap in snapshots:
        cols = snap.expert_labels or [f"expert{k}" for k in range(snap.weights.shape[1])]
        rows = snap.unit_labels or [f"task{t}" for t in range(snap.weights.shape[0])]
        parts = [("", snap.weights)]
        if components:
            parts += [("_gate", snap.gate), ("_native", snap.native)]
        for suffix, matrix in parts:
            path = out_dir / f"gates_level{snap.level}{suffix}.csv"
            _write_matrix(path, matrix, cols, rows)
            written.append(path)
    return written
