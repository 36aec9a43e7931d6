"""Evaluation metrics for binary and regression tasks."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class UndefinedMetricError(ValueError):
    """The metric has no value for this input (e.g. only one class present)."""


def _as_1d(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64).reshape(-1)


def auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney rank statistic.

    Equals the probability that a random positive scores above a random
    negative, counting ties as one half.
    """
    s, y = _as_1d(scores), _as_1d(labels)
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in length: {s.size} vs {y.size}")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative label")
    ranks = rankdata(s)  # average ranks for ties
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def normalized_entropy(predictions, labels, clip: float = 1e-7) -> float:
    """Mean log loss divided by the entropy of the label base rate."""
    p = np.clip(_as_1d(predictions), clip, 1.0 - clip)
    y = _as_1d(labels)
    base = y.mean()
    if base <= 0.0 or base >= 1.0:
        raise UndefinedMetricError("normalized entropy needs both classes present")
    ce = -np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    h = -(base * np.log(base) + (1.0 - base) * np.log(1.0 - base))
    return float(ce / h)


def mse(pred, target) -> float:
    return float(np.mean((_as_1d(pred) - _as_1d(target)) ** 2))


def sigmoid(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
