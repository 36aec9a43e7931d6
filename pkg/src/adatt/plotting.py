"""Report figures written next to the CSV/JSON outputs of the CLI."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PALETTE = ["#0072B2", "#D55E00", "#009E73", "#CC79A7", "#56B4E9", "#E69F00"]


def _style(ax) -> None:
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.grid(axis="y", alpha=0.3)


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no timestamps in the file so reruns are comparable
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_validation_curves(curves: Mapping[int, Sequence[float]], path: str | Path, ylabel: str = "selection score") -> Path:
    """One line per seed: the validation selection score after each epoch."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for i, (seed, curve) in enumerate(sorted(curves.items())):
        ax.plot(np.arange(1, len(curve) + 1), curve, marker="o", ms=3, color=PALETTE[i % len(PALETTE)], label=f"seed {seed}")
    ax.set_xlabel("epoch")
    ax.set_ylabel(ylabel)
    if len(curves) <= 8:
        ax.legend(frameon=False, fontsize="small")
    _style(ax)
    return _save(fig, path)


def plot_sweep(
    values: Sequence[int],
    means: Mapping[str, Sequence[float]],
    stds: Mapping[str, Sequence[float]],
    path: str | Path,
    xlabel: str,
    ylabel: str = "test AUC",
) -> Path:
    """Per-task mean with a one-std band across the swept values."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = np.asarray(values)
    for i, task in enumerate(means):
        m = np.asarray(means[task], dtype=float)
        s = np.asarray(stds[task], dtype=float)
        color = PALETTE[i % len(PALETTE)]
        ax.plot(x, m, marker="o", color=color, label=task)
        ax.fill_between(x, m - s, m + s, color=color, alpha=0.15, lw=0)
    ax.set_xticks(x)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False, fontsize="small")
    _style(ax)
    return _save(fig, path)


def plot_ablation(degradation_pct: Mapping[str, float], path: str | Path, metric: str = "auc") -> Path:
    """Bars of percent degradation per task (positive = ablated model worse)."""
    tasks = list(degradation_pct)
    vals = np.array([degradation_pct[t] for t in tasks], dtype=float)
    fig, ax = plt.subplots(figsize=(max(3.0, 1.2 * len(tasks) + 1.5), 3.5))
    colors = [PALETTE[1] if v > 0 else PALETTE[0] for v in vals]
    ax.bar(np.arange(len(tasks)), vals, color=colors)
    ax.axhline(0.0, color="#565656", lw=0.8)
    ax.set_xticks(np.arange(len(tasks)))
    ax.set_xticklabels(tasks)
    ax.set_ylabel(f"{metric} degradation (%)")
    _style(ax)
    return _save(fig, path)
