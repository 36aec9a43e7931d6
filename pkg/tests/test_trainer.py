import math

import numpy as np
import pytest

from adatt.data import Features, TaskBatch, synth_multitask
from adatt.models import build_model, config_from_spec
from adatt.training import TrainConfig, TrainingError, evaluate, total_loss, train
from adatt.training.trainer import task_losses


def make(arch="shared_bottom", num_tasks=2, d=6, dims=(8, 4), seed=0, **kw):
    cfg = config_from_spec(arch, num_tasks=num_tasks, input_dim=d, dims=list(dims), tower_hidden_dim=4, **kw)
    return build_model(arch, cfg, seed)


def separable(n=400, d=4, seed=0):
    r = np.random.default_rng(seed)
    x = r.normal(size=(n, d)).astype(np.float32)
    y = (x[:, 0] + 0.5 * x[:, 1] > 0).astype(np.float32)[:, None]
    return TaskBatch(Features(x, np.zeros((n, 0), np.int64)), [y], ["classification"])


def test_zero_learning_rate_leaves_parameters(rng):
    data = synth_multitask(0, 200, 6, 0.5)
    model = make()
    before = model.state_dict()
    train(model, data, None, TrainConfig(learning_rate=0.0, max_epochs=2, batch_size=32))
    after = model.state_dict()
    assert all(np.array_equal(before[k], after[k]) for k in before)


def test_separable_single_task_reaches_perfect_auc():
    data = separable()
    model = make(num_tasks=1, d=4)
    train(model, data, None, TrainConfig(learning_rate=0.01, max_epochs=50, batch_size=32, patience=50))
    assert evaluate(model, data)["task0"]["auc"] > 0.995


def test_initial_loss_near_log2():
    data = synth_multitask(1, 512, 6, 0.5)
    for arch in ("adatt", "shared_bottom", "mmoe", "ple", "cross_stitch", "ml_mmoe", "adatt_sp"):
        extra = {"shared_experts": 1} if arch in ("adatt", "ple") else {}
        model = make(arch, **extra)
        _, parts = total_loss(model(data.features), data)
        for p in parts:
            assert abs(p - math.log(2)) < 0.05, arch


def test_total_is_sum_of_task_losses():
    data = synth_multitask(2, 128, 6, 0.2, num_tasks=3)
    model = make("mmoe", num_tasks=3)
    outs = model(data.features)
    total, parts = total_loss(outs, data)
    assert float(total.data) == pytest.approx(sum(parts), abs=1e-6)
    assert parts == [float(l.data) for l in task_losses(outs, data)]


def test_regression_task_uses_mse():
    data = synth_multitask(3, 64, 6, 0.0)
    data.task_kinds = ["classification", "regression"]
    model = make(task_kinds=["classification", "regression"])
    outs = model(data.features)
    _, parts = total_loss(outs, data)
    want = float(np.mean((outs[1].data.astype(np.float64) - data.labels[1]) ** 2))
    assert parts[1] == pytest.approx(want, rel=1e-5)
    assert "mse" in evaluate(model, data)["task1"]


def test_non_finite_loss_aborts_with_context():
    data = synth_multitask(0, 64, 6, 0.5)
    data.features.dense[10, 2] = np.nan
    with pytest.raises(TrainingError, match=r"epoch 1, batch 0 \(lr=0.001\)"):
        train(make(), data, None, TrainConfig(max_epochs=1, batch_size=64))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergent_learning_rate_aborts():
    data = synth_multitask(0, 256, 6, 0.5)
    with pytest.raises(TrainingError, match="lr=1e\\+30"):
        train(make(), data, None, TrainConfig(learning_rate=1e30, max_epochs=20, batch_size=16, patience=20))


def test_loss_weights_must_be_unit():
    with pytest.raises(ValueError):
        TrainConfig(loss_weights=[1.0, 0.5])
    TrainConfig(loss_weights=[1.0, 1.0])


def test_early_stopping_restores_best_epoch():
    data = synth_multitask(0, 400, 6, 0.5, label_noise=0.3)
    valid = synth_multitask(0, 200, 6, 0.5, split=1, label_noise=0.3)
    model = make()
    res = train(model, data, valid, TrainConfig(learning_rate=0.01, max_epochs=15, patience=2, batch_size=32))
    scores = [h["score"] for h in res.history]
    assert res.best_epoch == int(np.argmax(scores)) + 1
    assert len(res.history) <= 15
    final = evaluate(model, valid)
    assert np.mean([m["auc"] for m in final.values()]) == pytest.approx(res.best_score, abs=1e-9)


def test_training_is_deterministic():
    data = synth_multitask(0, 300, 6, 0.5)
    states = []
    for _ in range(2):
        model = make("adatt", shared_experts=1, seed=4)
        train(model, data, None, TrainConfig(learning_rate=0.01, max_epochs=2, batch_size=64, seed=9))
        states.append(model.state_dict())
    assert all(np.array_equal(states[0][k], states[1][k]) for k in states[0])


def test_task_count_mismatch():
    with pytest.raises(TrainingError):
        train(make(num_tasks=3), synth_multitask(0, 32, 6, 0.5), None, TrainConfig(max_epochs=1))
