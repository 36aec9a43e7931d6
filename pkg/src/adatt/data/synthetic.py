"""Binary tasks driven by correlated linear latent factors."""

from __future__ import annotations

import numpy as np

from .batch import Features, TaskBatch


def _directions(seed: int, d: int, k: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 0])
    q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    return q  # k orthonormal columns


def synth_multitask(
    seed: int,
    B: int,
    d: int,
    rho: float,
    *,
    split: int = 0,
    label_noise: float = 0.0,
    num_tasks: int = 2,
) -> TaskBatch:
    """Inputs ``x ~ N(0, I_d)``; task latents ``u0 = a0.x`` and
    ``ut = rho*a0.x + sqrt(1-rho^2)*at.x`` for orthonormal ``a0..a(T-1)``
    fixed by ``seed``, so ``corr(u0, ut) = rho`` (and ``rho^2`` between two
    later tasks).  Labels are ``u + noise > 0``.

    ``split`` selects an independent sample from the same tasks, so
    train/valid/test splits share their Bayes-optimal predictors.
    """
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [-1, 1], got {rho}")
    if num_tasks < 2:
        raise ValueError("need at least two tasks")
    if d < num_tasks:
        raise ValueError(f"need d >= {num_tasks} for {num_tasks} latent directions")
    dirs = _directions(seed, d, num_tasks).T
    rng = np.random.default_rng([seed, 1, split])
    x = rng.standard_normal((B, d))
    base = x @ dirs[0]
    rest = np.sqrt(max(0.0, 1.0 - rho * rho))
    latents = [base] + [rho * base + rest * (x @ a) for a in dirs[1:]]
    if label_noise > 0:
        latents = [u + label_noise * rng.standard_normal(B) for u in latents]
    return TaskBatch(
        Features(x.astype(np.float32), np.zeros((B, 0), dtype=np.int64)),
        [(u > 0).astype(np.float32)[:, None] for u in latents],
        ["classification"] * num_tasks,
        [f"task{t}" for t in range(num_tasks)],
    )


def synthetic_splits(
    seed: int,
    n_train: int,
    n_valid: int,
    n_test: int,
    d: int,
    rho: float,
    label_noise: float = 0.0,
    num_tasks: int = 2,
) -> tuple[TaskBatch, TaskBatch, TaskBatch]:
    return tuple(
        synth_multitask(seed, n, d, rho, split=i, label_noise=label_noise, num_tasks=num_tasks)
        for i, n in enumerate((n_train, n_valid, n_test))
    )
