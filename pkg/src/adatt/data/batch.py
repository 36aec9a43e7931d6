from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Features:
    """Encoded model input: z-scored numeric columns and categorical indices."""

    dense: np.ndarray  # [B, n_dense] float32
    categorical: np.ndarray  # [B, n_cat] int64, 0 = out-of-vocabulary

    def __len__(self) -> int:
        return self.dense.shape[0]

    def subset(self, idx) -> "Features":
        return Features(self.dense[idx], self.categorical[idx])


@dataclass
class TaskBatch:
    features: Features
    labels: list[np.ndarray]  # one [B, 1] float32 array per task
    task_kinds: list[str]
    task_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.task_names:
            self.task_names = [f"task{t}" for t in range(len(self.labels))]

    def __len__(self) -> int:
        return len(self.features)

    @property
    def num_tasks(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "TaskBatch":
        return TaskBatch(self.features.subset(idx), [y[idx] for y in self.labels], self.task_kinds, self.task_names)

    def iter_batches(self, batch_size: int, rng: np.random.Generator | None = None):
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for start in range(0, len(order), batch_size):
            yield self.subset(order[start : start + batch_size])
