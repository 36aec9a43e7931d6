from .experiment import (
    AblationResult,
    DataSplits,
    ExperimentResult,
    fingerprint,
    read_results,
    run_ablation,
    run_experiment,
    run_seed,
    summarize,
    write_results,
)
from .metrics import UndefinedMetricError, auc, mse, normalized_entropy
from .trainer import TrainConfig, TrainingError, TrainResult, evaluate, predict, selection_score, total_loss, train

__all__ = [
    "AblationResult",
    "DataSplits",
    "ExperimentResult",
    "TrainConfig",
    "TrainResult",
    "TrainingError",
    "UndefinedMetricError",
    "auc",
    "evaluate",
    "fingerprint",
    "mse",
    "normalized_entropy",
    "predict",
    "read_results",
    "run_ablation",
    "run_experiment",
    "run_seed",
    "selection_score",
    "summarize",
    "total_loss",
    "train",
    "write_results",
]
