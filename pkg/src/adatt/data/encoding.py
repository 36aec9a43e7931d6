"""Train-fitted feature encoding for census records."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..models.base import FrontendSpec
from .batch import Features, TaskBatch
from .census import COLUMNS, CensusRecord, DataError, derive_label_matrix, label_columns, load_layout, task_rules

OOV = 0


def embedding_dim(cardinality: int, max_dim: int = 16) -> int:
    return max(1, min(max_dim, math.ceil(math.sqrt(cardinality))))


@dataclass
class FeatureEncoder:
    """Vocabularies and z-score statistics, all taken from the training split.

    Category indices start at 1 in sorted order; index 0 is the
    out-of-vocabulary bucket.
    """

    continuous: list[str]
    categorical: list[str]
    vocab: dict[str, dict[str, int]] = field(default_factory=dict)
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)
    max_embedding_dim: int = 16

    @classmethod
    def for_layout(cls, layout: dict | None = None) -> "FeatureEncoder":
        layout = load_layout() if layout is None else layout
        excluded = set(layout.get("ignored", [])) | set(label_columns(layout))
        continuous = [c for c in layout["continuous"] if c not in excluded]
        categorical = [c for c in COLUMNS if c not in excluded and c not in continuous]
        return cls(continuous, categorical, max_embedding_dim=layout.get("embedding", {}).get("max_dim", 16))

    @property
    def fitted(self) -> bool:
        return bool(self.vocab) or (not self.categorical and bool(self.mean))

    def fit(self, records: Sequence[CensusRecord]) -> "FeatureEncoder":
        if not records:
            raise DataError("cannot fit an encoder on zero records")
        for name in self.continuous:
            col = COLUMNS.index(name)
            values = np.array([float(r[col]) for r in records], dtype=np.float64)
            std = float(values.std())
            self.mean[name] = float(values.mean())
            self.std[name] = std if std > 0 else 1.0
        for name in self.categorical:
            col = COLUMNS.index(name)
            cats = sorted({r[col] for r in records})
            self.vocab[name] = {c: i + 1 for i, c in enumerate(cats)}
        return self

    def transform(self, records: Sequence[CensusRecord]) -> Features:
        if not self.fitted:
            raise DataError("encoder used before fit()")
        n = len(records)
        dense = np.empty((n, len(self.continuous)), dtype=np.float32)
        for j, name in enumerate(self.continuous):
            col = COLUMNS.index(name)
            vals = np.array([float(r[col]) for r in records], dtype=np.float64)
            dense[:, j] = (vals - self.mean[name]) / self.std[name]
        cat = np.empty((n, len(self.categorical)), dtype=np.int64)
        for j, name in enumerate(self.categorical):
            col = COLUMNS.index(name)
            vocab = self.vocab[name]
            cat[:, j] = [vocab.get(r[col], OOV) for r in records]
        return Features(dense, cat)

    def cardinalities(self) -> list[int]:
        return [len(self.vocab[c]) + 1 for c in self.categorical]

    def embedding_dims(self) -> list[int]:
        return [embedding_dim(len(self.vocab[c]), self.max_embedding_dim) for c in self.categorical]

    def frontend_spec(self) -> FrontendSpec:
        return FrontendSpec(len(self.continuous), self.cardinalities(), self.embedding_dims(), list(self.categorical))

    @property
    def input_dim(self) -> int:
        return self.frontend_spec().output_dim

    def to_dict(self) -> dict[str, Any]:
        return {
            "continuous": self.continuous,
            "categorical": self.categorical,
            "vocab": self.vocab,
            "mean": self.mean,
            "std": self.std,
            "max_embedding_dim": self.max_embedding_dim,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FeatureEncoder":
        return cls(**d)


def encode_batch(encoder: FeatureEncoder, records: Sequence[CensusRecord], layout: dict | None = None) -> TaskBatch:
    labels = derive_label_matrix(records, layout)
    rules = task_rules(layout)
    return TaskBatch(
        features=encoder.transform(records),
        labels=[labels[:, j : j + 1].copy() for j in range(labels.shape[1])],
        task_kinds=["classification"] * len(rules),
        task_names=[r.name for r in rules],
    )
