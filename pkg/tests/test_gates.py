import hashlib

import numpy as np
import pytest

from adatt.data import Features, synth_multitask
from adatt.gates import WeightSnapshot, capture_weights, export_heatmap_data
from adatt.models import UnsupportedArchitectureError, build_model, config_from_spec


def fusion(arch="adatt_sp", num_tasks=2, m=1, ms=0, dims=(6, 4), seed=0):
    cfg = config_from_spec(arch, num_tasks=num_tasks, input_dim=5, dims=list(dims), tower_hidden_dim=3,
                           experts_per_task=m, shared_experts=ms)
    return build_model(arch, cfg, seed)


def zero_gates(model):
    for name, p in model.named_parameters().items():
        if name.endswith("/gate"):
            p.data[...] = 0.0


@pytest.fixture
def feats(rng):
    x = rng.normal(size=(37, 5)).astype(np.float32)
    return Features(x, np.zeros((37, 0), np.int64))


def test_zero_gates_uniform_plus_native(feats):
    model = fusion(num_tasks=3)
    zero_gates(model)
    snaps = capture_weights(model, feats, batch_size=10)
    assert [s.level for s in snaps] == [1, 2]
    for s in snaps:
        np.testing.assert_allclose(s.weights, np.full((3, 3), 1 / 3) + np.eye(3), atol=1e-6)
        np.testing.assert_allclose(s.gate, 1 / 3, atol=1e-6)
        np.testing.assert_allclose(s.native, np.eye(3), atol=1e-6)
        assert s.n_examples == 37
        assert s.unit_labels == ["task0", "task1", "task2"]
        assert s.expert_labels == ["task0/expert0", "task1/expert0", "task2/expert0"]


def test_gate_parts_are_distributions_and_native_matches_v(feats):
    model = fusion("adatt", m=[2, 1], ms=1)
    for s in capture_weights(model, feats):
        np.testing.assert_allclose(s.gate.sum(axis=1), 1.0, atol=1e-6)
        assert np.all(s.gate >= 0)
    v = model.named_parameters()["level1/task0/native"].data
    np.testing.assert_allclose(capture_weights(model, feats)[0].native[0, :2], v, atol=1e-6)


def test_include_shared_adds_a_row_below_top(feats):
    model = fusion("adatt", m=1, ms=2)
    snaps = capture_weights(model, feats, include_shared=True)
    assert snaps[0].unit_labels == ["task0", "task1", "shared"]
    assert snaps[0].weights.shape == (3, 4)
    np.testing.assert_allclose(snaps[0].weights[2].sum(), 1.0, atol=1e-6)
    assert snaps[1].unit_labels == ["task0", "task1"]


def test_single_task_model(feats):
    snaps = capture_weights(fusion(num_tasks=1, m=2), feats)
    assert all(s.weights.shape == (1, 2) for s in snaps)


def test_streaming_mean_matches_two_pass(feats):
    model = fusion("adatt", m=[1, 2], ms=1, seed=3)
    streamed = capture_weights(model, feats, batch_size=4)
    caught = []
    model(feats, capture=caught)
    for lv, snap in enumerate(streamed):
        units = [u for u in caught[lv] if u[0] != "shared"]
        want = np.stack([u[1].astype(np.float64).mean(axis=0) for u in units])
        np.testing.assert_allclose(snap.weights, want, atol=1e-6)


def test_csv_hand_checked(tmp_path):
    snap = WeightSnapshot(1, np.array([[1.25, 0.75], [0.5, 1.5]]), np.zeros((2, 2)), np.zeros((2, 2)), 4,
                          ["task0/expert0", "task1/expert0"], ["task0", "task1"])
    (path,) = export_heatmap_data([snap], tmp_path)
    assert path.name == "gates_level1.csv"
    assert path.read_text() == (
        "unit,task0/expert0,task1/expert0\n"
        "task0,1.250000,0.750000\n"
        "task1,0.500000,1.500000\n"
    )


def test_reexport_is_byte_identical(tmp_path, feats):
    model = fusion("adatt", m=2, ms=1)
    snaps = capture_weights(model, feats)
    first = export_heatmap_data(snaps, tmp_path / "a", components=True)
    second = export_heatmap_data(capture_weights(model, feats), tmp_path / "b", components=True)
    assert len(first) == 6
    digest = lambda p: hashlib.sha256(p.read_bytes()).hexdigest()
    assert [digest(p) for p in first] == [digest(p) for p in second]


def test_empty_inputs_write_nothing(tmp_path, feats):
    with pytest.raises(ValueError):
        export_heatmap_data([], tmp_path / "out")
    assert not (tmp_path / "out").exists()
    with pytest.raises(ValueError):
        capture_weights(fusion(), feats.subset(slice(0, 0)))


def test_non_fusion_model_rejected(feats):
    cfg = config_from_spec("mmoe", num_tasks=2, input_dim=5, dims=[4], tower_hidden_dim=3)
    with pytest.raises(UnsupportedArchitectureError, match="adatt"):
        capture_weights(build_model("mmoe", cfg, 0), feats)


def test_accepts_task_batch():
    data = synth_multitask(0, 20, 5, 0.5)
    assert capture_weights(fusion(), data)[0].n_examples == 20
