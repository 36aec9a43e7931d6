"""UCI Census-Income (KDD) loading and the three derived binary tasks."""

from __future__ import annotations

import logging
import sys
from collections import namedtuple
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Input data is missing, malformed or inconsistent."""


@lru_cache(maxsize=None)
def _packaged_layout() -> dict[str, Any]:
    text = resources.files("adatt.data").joinpath("census_features.yaml").read_text()
    return yaml.safe_load(text)


def load_layout(path: str | Path | None = None) -> dict[str, Any]:
    """The feature/task layout; the packaged file unless ``path`` is given."""
    if path is None:
        return _packaged_layout()
    with open(path) as fh:
        return yaml.safe_load(fh)


COLUMNS: tuple[str, ...] = tuple(_packaged_layout()["columns"])
CensusRecord = namedtuple("CensusRecord", COLUMNS)
STANDARD_COUNTS = (_packaged_layout()["standard_counts"]["train"], _packaged_layout()["standard_counts"]["test"])


def normalize_category(value: str) -> str:
    # labels carry a trailing period in the raw files
    return "".join(value.strip().rstrip(".").split()).lower()


def parse_line(line: str, lineno: int, path: str | Path = "<input>", layout: dict | None = None) -> CensusRecord:
    layout = layout or _packaged_layout()
    fields = line.rstrip("\r\n").split(",")
    if len(fields) != len(COLUMNS):
        raise DataError(f"{path}:{lineno}: expected {len(COLUMNS)} comma-separated fields, found {len(fields)}")
    values = [sys.intern(f.strip()) for f in fields]
    for name in layout["continuous"]:
        raw = values[COLUMNS.index(name)]
        try:
            float(raw)
        except ValueError:
            raise DataError(f"{path}:{lineno}: column {name!r} is not numeric: {raw!r}") from None
    return CensusRecord(*values)


def read_census_file(path: str | Path, layout: dict | None = None) -> list[CensusRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"census file not found: {path}")
    records = []
    with open(path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(parse_line(line, lineno, path, layout))
    return records


def load_census(
    train_path: str | Path,
    test_path: str | Path,
    split_seed: int = 0,
    expected_counts: tuple[int, int] | None = STANDARD_COUNTS,
    layout: dict | None = None,
) -> tuple[list[CensusRecord], list[CensusRecord], list[CensusRecord]]:
    """Read the train/test files and split the test file into equal
    validation and test halves with a seeded permutation.

    Pass ``expected_counts=None`` to accept files other than the standard
    release (fixtures, subsamples).
    """
    train = read_census_file(train_path, layout)
    test_all = read_census_file(test_path, layout)
    if expected_counts is not None and (len(train), len(test_all)) != tuple(expected_counts):
        raise DataError(
            f"expected {expected_counts[0]} train / {expected_counts[1]} test records, "
            f"found {len(train)} / {len(test_all)}"
        )
    perm = np.random.default_rng(split_seed).permutation(len(test_all))
    half = len(test_all) // 2
    valid = [test_all[i] for i in sorted(perm[:half])]
    test = [test_all[i] for i in sorted(perm[half:])]
    return train, valid, test


@dataclass(frozen=True)
class TaskRule:
    name: str
    column: str
    positive: frozenset[str]
    negative: frozenset[str]

    def label(self, value: str) -> int:
        key = normalize_category(value)
        if key in self.positive:
            return 1
        if key in self.negative:
            return 0
        raise DataError(f"task {self.name}: unknown {self.column} category {value!r}")


def task_rules(layout: dict | None = None) -> list[TaskRule]:
    layout = layout or _packaged_layout()
    return [
        TaskRule(
            t["name"],
            t["column"],
            frozenset(normalize_category(v) for v in t["positive"]),
            frozenset(normalize_category(v) for v in t["negative"]),
        )
        for t in layout["tasks"]
    ]


def label_columns(layout: dict | None = None) -> list[str]:
    return [rule.column for rule in task_rules(layout)]


def derive_tasks(record: CensusRecord, layout: dict | None = None) -> tuple[int, ...]:
    """(income > 50K, never married, at least college) as 0/1 labels."""
    return tuple(rule.label(getattr(record, rule.column)) for rule in task_rules(layout))


def derive_label_matrix(records: Sequence[CensusRecord], layout: dict | None = None) -> np.ndarray:
    rules = task_rules(layout)
    out = np.empty((len(records), len(rules)), dtype=np.float32)
    for j, rule in enumerate(rules):
        col = COLUMNS.index(rule.column)
        cache: dict[str, int] = {}
        for i, rec in enumerate(records):
            v = rec[col]
            if v not in cache:
                cache[v] = rule.label(v)
            out[i, j] = cache[v]
    return out


def base_rates(records: Iterable[CensusRecord], layout: dict | None = None) -> dict[str, float]:
    records = list(records)
    labels = derive_label_matrix(records, layout)
    rates = {rule.name: float(labels[:, j].mean()) for j, rule in enumerate(task_rules(layout))}
    log.info("label base rates over %d records: %s", len(records), rates)
    return rates
