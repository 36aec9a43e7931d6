from .batch import Features, TaskBatch
from .census import (
    COLUMNS,
    STANDARD_COUNTS,
    CensusRecord,
    DataError,
    base_rates,
    derive_label_matrix,
    derive_tasks,
    label_columns,
    load_census,
    load_layout,
    read_census_file,
)
from .encoding import FeatureEncoder, encode_batch, embedding_dim
from .synthetic import synth_multitask, synthetic_splits

__all__ = [
    "COLUMNS",
    "STANDARD_COUNTS",
    "CensusRecord",
    "DataError",
    "FeatureEncoder",
    "Features",
    "TaskBatch",
    "base_rates",
    "derive_label_matrix",
    "derive_tasks",
    "embedding_dim",
    "encode_batch",
    "label_columns",
    "load_census",
    "load_layout",
    "read_census_file",
    "synth_multitask",
    "synthetic_splits",
]
