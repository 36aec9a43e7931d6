"""Architecture-agnostic multi-task training with early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from ..data.batch import TaskBatch
from ..models.base import MultiTaskModel
from ..tensor import Adam, Tensor, add, bce_loss, mse_loss, no_grad
from .metrics import UndefinedMetricError, auc, mse, normalized_entropy, sigmoid

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 30
    patience: int = 3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss_weights: list[float] | None = None
    eval_batch_size: int = 8192

    def __post_init__(self):
        if self.loss_weights is not None and any(w != 1 for w in self.loss_weights):
            raise ValueError("task losses are summed with equal unit weights")
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1:
            raise ValueError("batch_size and patience must be >= 1, max_epochs >= 0")


@dataclass
class TrainResult:
    model: MultiTaskModel
    history: list[dict[str, Any]] = field(default_factory=list)
    best_epoch: int = 0
    best_score: float = float("-inf")


def task_losses(outputs: Sequence[Tensor], batch: TaskBatch) -> list[Tensor]:
    losses = []
    for out, y, kind in zip(outputs, batch.labels, batch.task_kinds):
        target = Tensor(y.astype(out.data.dtype))
        losses.append(bce_loss(out, target) if kind == "classification" else mse_loss(out, target))
    return losses


def total_loss(outputs: Sequence[Tensor], batch: TaskBatch) -> tuple[Tensor, list[float]]:
    """Unweighted sum of the per-task losses, plus each task's value."""
    losses = task_losses(outputs, batch)
    total = losses[0]
    for loss in losses[1:]:
        total = add(total, loss)
    return total, [float(l.data) for l in losses]


def predict(model: MultiTaskModel, batch: TaskBatch, batch_size: int = 8192) -> list[np.ndarray]:
    """Raw outputs (logits for classification) per task, each ``[N]``."""
    chunks: list[list[np.ndarray]] = [[] for _ in range(model.num_tasks)]
    with no_grad():
        for part in batch.iter_batches(batch_size):
            for t, out in enumerate(model(part.features)):
                chunks[t].append(out.data.reshape(-1).astype(np.float64))
    return [np.concatenate(c) if c else np.zeros(0) for c in chunks]


def evaluate(model: MultiTaskModel, batch: TaskBatch, batch_size: int = 8192) -> dict[str, dict[str, float]]:
    """Per-task metrics: AUC and NE for classification, MSE for regression.
    Undefined metrics (single-class labels) are reported as NaN."""
    outputs = predict(model, batch, batch_size)
    results = {}
    for name, kind, out, y in zip(batch.task_names, batch.task_kinds, outputs, batch.labels):
        y = y.reshape(-1)
        if kind == "classification":
            m = {}
            for key, fn, arg in (("auc", auc, out), ("ne", normalized_entropy, sigmoid(out))):
                try:
                    m[key] = fn(arg, y)
                except UndefinedMetricError:
                    m[key] = float("nan")
            m["loss"] = float(np.mean(np.maximum(out, 0) - out * y + np.log1p(np.exp(-np.abs(out)))))
        else:
            m = {"mse": mse(out, y)}
            m["loss"] = m["mse"]
        results[name] = m
    return results


def selection_score(metrics: dict[str, dict[str, float]]) -> float:
    """Mean validation AUC over tasks where it is defined; otherwise minus the
    summed validation loss."""
    aucs = [m["auc"] for m in metrics.values() if "auc" in m and not math.isnan(m["auc"])]
    if aucs:
        return float(np.mean(aucs))
    return -float(sum(m["loss"] for m in metrics.values()))


def train(model: MultiTaskModel, train_data: TaskBatch, valid_data: TaskBatch | None, config: TrainConfig) -> TrainResult:
    """Adam on the summed task losses; keeps the parameters of the best
    validation epoch (the last epoch when no validation data is given)."""
    if train_data.num_tasks != model.num_tasks:
        raise TrainingError(f"data has {train_data.num_tasks} tasks, model has {model.num_tasks}")
    params = model.parameters()
    opt = Adam(params, lr=config.learning_rate, betas=(config.beta1, config.beta2), eps=config.eps)
    rng = np.random.default_rng(config.seed)
    result = TrainResult(model)
    best_state = model.state_dict()
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        sums = np.zeros(model.num_tasks)
        seen = 0
        for step, batch in enumerate(train_data.iter_batches(config.batch_size, rng)):
            opt.zero_grad()
            loss, parts = total_loss(model(batch.features), batch)
            if not np.isfinite(float(loss.data)):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {step} (lr={config.learning_rate})"
                )
            loss.backward()
            opt.step()
            sums += np.array(parts) * len(batch)
            seen += len(batch)
        record = {"epoch": epoch, "train_loss": (sums / max(seen, 1)).tolist()}
        if valid_data is not None and len(valid_data):
            vm = evaluate(model, valid_data, config.eval_batch_size)
            score = selection_score(vm)
            record.update(valid=vm, score=score)
        else:
            score = -float(sum(record["train_loss"]))
            record["score"] = score
        result.history.append(record)
        log.debug("epoch %d: %s", epoch, record)
        if score > result.best_score:
            result.best_score, result.best_epoch = score, epoch
            best_state = model.state_dict()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    model.load_state_dict(best_state)
    return result


def config_dict(config: TrainConfig) -> dict[str, Any]:
    return asdict(config)
