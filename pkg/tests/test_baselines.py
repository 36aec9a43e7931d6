import numpy as np
import pytest

from adatt.models import (
    BaselineConfig,
    ConfigError,
    CrossStitch,
    MMoE,
    PLE,
    SharedBottom,
    build_baseline,
    build_model,
    config_from_spec,
    make_config,
)
from adatt.tensor import ShapeError, Tensor, no_grad
from oracles import REFERENCES, count_mmoe, count_ple


def bcfg(kind, **kw):
    base = dict(kind=kind, num_tasks=2, input_dim=4, hidden_dims=[5, 3], tower_hidden_dim=3)
    base.update(kw)
    return BaselineConfig(**base)


def outputs(model, x):
    with no_grad():
        return [o.data for o in model(Tensor(x))]


def randomize(model, rng):
    for t in model.parameters():
        t.data[...] = rng.uniform(-1, 1, size=t.shape)


EXTRA = {
    "shared_bottom": {},
    "mmoe": {"num_experts": 3},
    "ml_mmoe": {"num_experts": 3},
    "cross_stitch": {},
    "ple": {"experts_per_task": [1, 2], "shared_experts": 2},
}


@pytest.mark.parametrize("kind", list(EXTRA))
def test_matches_loop_oracle(kind, f64, rng):
    model = build_baseline(bcfg(kind, **EXTRA[kind]), 2)
    randomize(model, rng)
    x = rng.uniform(-2, 2, size=(3, 4))
    for got, want in zip(outputs(model, x), REFERENCES[kind](model, x)):
        np.testing.assert_allclose(got, want, atol=1e-6, rtol=0)


@pytest.mark.parametrize("kind", list(EXTRA))
def test_width_mismatch(kind):
    model = build_baseline(bcfg(kind, **EXTRA[kind]), 0)
    with pytest.raises(ShapeError):
        model(Tensor(np.zeros((2, 3))))


def test_shared_bottom_three_hidden_layers():
    # two shared layers plus the towers' hidden layer
    model = SharedBottom(bcfg("shared_bottom", hidden_dims=[128, 64], tower_hidden_dim=32), 0)
    assert len(model.bottom) + 1 == 3


def test_mmoe_single_expert_is_tower_of_expert(f64, rng):
    model = MMoE(bcfg("mmoe", num_experts=1), 0)
    randomize(model, rng)
    x = rng.normal(size=(4, 4))
    xt = Tensor(x)
    h = xt
    for layer in model.experts[0]:
        h = layer(h)
    for t, out in enumerate(outputs(model, x)):
        np.testing.assert_allclose(out, model.towers[t](h).data, atol=1e-12)


def test_mmoe_zero_gates_average_experts(f64, rng):
    model = MMoE(bcfg("mmoe", num_experts=3), 0)
    randomize(model, rng)
    for g in model.gates:
        g.data[...] = 0.0
    x = Tensor(rng.normal(size=(4, 4)))
    for g in model.gate_weights(x):
        np.testing.assert_allclose(g.data, 1 / 3)


def test_mmoe_gates_are_distributions(rng):
    model = MMoE(bcfg("mmoe", num_experts=4), 0)
    for g in model.gate_weights(Tensor(rng.normal(size=(10, 4)) * 4)):
        assert np.all(g.data >= 0)
        np.testing.assert_allclose(g.data.sum(axis=1), 1.0, atol=1e-6)


def test_mmoe_parameter_census():
    model = MMoE(bcfg("mmoe", num_experts=3), 0)
    assert model.num_parameters() == count_mmoe(2, [5, 3], 4, 3, 3)


def test_ml_mmoe_gate_layout():
    model = build_baseline(bcfg("ml_mmoe", hidden_dims=[5, 4, 3], num_experts=3), 0)
    names = model.named_parameters()
    assert {f"level1/gate{j}" for j in range(3)} <= set(names)
    assert {f"level3/task{t}/gate" for t in range(2)} <= set(names)
    # every gate reads the raw 4-wide input
    assert all(names[n].shape == (3, 4) for n in names if "gate" in n)


def test_cross_stitch_identity_equals_independent_networks(rng):
    model = CrossStitch(bcfg("cross_stitch"), 3)
    for s in model.stitches:
        s.data[...] = np.eye(2)
    x = rng.normal(size=(5, 4)).astype(np.float32)
    got = outputs(model, x)
    for t in range(2):
        h = Tensor(x)
        for layers in model.layers:
            h = layers[t](h)
        with no_grad():
            assert np.array_equal(got[t], model.towers[t](h).data)


def test_cross_stitch_half_mixing_symmetric(f64, rng):
    model = CrossStitch(bcfg("cross_stitch"), 0)
    randomize(model, rng)
    p = model.named_parameters()
    for name in list(p):
        if name.startswith("level") and "task1" in name:
            p[name].data[...] = p[name.replace("task1", "task0")].data
        if name.startswith("tower1"):
            p[name].data[...] = p[name.replace("tower1", "tower0")].data
    for s in model.stitches:
        s.data[...] = 0.5
    a, b = outputs(model, rng.normal(size=(3, 4)))
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_cross_stitch_init_near_identity():
    model = CrossStitch(bcfg("cross_stitch", num_tasks=3), 0)
    for s in model.stitches:
        assert s.shape == (3, 3)
        assert np.max(np.abs(s.data - np.eye(3))) <= 0.01
    assert len(model.stitches) == 2


def test_ple_requires_shared_experts():
    with pytest.raises(ConfigError):
        bcfg("ple", experts_per_task=1, shared_experts=0)


def test_ple_single_expert_parameter_census():
    c = bcfg("ple", experts_per_task=1, shared_experts=1)
    model = PLE(c, 0)
    assert model.num_parameters() == count_ple(2, [5, 3], 4, 1, 1, 3)
    names = model.named_parameters()
    assert names["level1/task0/gate"].shape == (2, 4)
    assert names["level1/shared/gate"].shape == (3, 4)
    assert "level2/shared/gate" not in names


def test_ple_saturated_native_gates_are_independent_towers(f64, rng):
    c = bcfg("ple", experts_per_task=1, shared_experts=1)
    model = PLE(c, 0)
    randomize(model, rng)
    for lv in range(2):
        for t in range(2):
            g = model.task_gates[lv][t].data
            g[...] = 0.0
            g[0] = 1e4  # the native expert, given positive inputs
    x = rng.uniform(0.5, 1.0, size=(3, 4))
    # keep every hidden activation positive so the huge logit always wins
    for lv in range(2):
        for t in range(2):
            e = model.task_experts[lv][t][0]
            e.w.data[...] = np.abs(e.w.data)
            e.b.data[...] = np.abs(e.b.data) + 0.1
    got = outputs(model, x)
    for t in range(2):
        h = Tensor(x)
        for lv in range(2):
            h = model.task_experts[lv][t][0](h)
        np.testing.assert_allclose(got[t], model.towers[t](h).data, atol=1e-9)


def test_ple_gates_are_distributions(rng):
    from adatt.models.baselines import _gate

    model = PLE(bcfg("ple", experts_per_task=2, shared_experts=1), 0)
    x = Tensor(rng.normal(size=(6, 4)) * 3)
    for w in model.task_gates[0] + [model.shared_gates[0]]:
        g = _gate(w, x).data
        np.testing.assert_allclose(g.sum(axis=1), 1.0, atol=1e-6)


@pytest.mark.parametrize(
    "kw",
    [dict(kind="nope"), dict(hidden_dims=[]), dict(num_tasks=0), dict(kind="mmoe", num_experts=0)],
)
def test_invalid_baseline_configs(kw):
    base = dict(kind="shared_bottom", num_tasks=2, input_dim=4, hidden_dims=[3])
    base.update(kw)
    with pytest.raises(ConfigError):
        BaselineConfig(**base)


def test_registry_lists_valid_names_on_error():
    with pytest.raises(ConfigError, match="adatt, adatt_sp, shared_bottom"):
        make_config("transformer", num_tasks=1)


def test_config_from_spec_equal_expert_budget():
    for arch, expected in (("mmoe", 6), ("ml_mmoe", 6)):
        c = config_from_spec(arch, num_tasks=3, input_dim=8, dims=[128, 64], experts_per_task=2)
        assert c.num_experts == expected
    ple = config_from_spec("ple", num_tasks=3, input_dim=8, dims=[128, 64], experts_per_task=1, shared_experts=3)
    assert sum(ple.experts_per_task) + ple.shared_experts == 6
    with pytest.raises(ConfigError):
        config_from_spec("adatt_sp", num_tasks=3, input_dim=8, dims=[4], shared_experts=1)


def test_every_architecture_shares_the_interface(rng):
    x = rng.normal(size=(3, 4)).astype(np.float32)
    for arch in ("adatt", "adatt_sp", "shared_bottom", "mmoe", "ml_mmoe", "cross_stitch", "ple"):
        c = config_from_spec(arch, num_tasks=2, input_dim=4, dims=[5, 3], experts_per_task=1,
                             shared_experts=1 if arch in ("adatt", "ple") else 0)
        model = build_model(arch, c, 0)
        outs = outputs(model, x)
        assert len(outs) == 2 and all(o.shape == (3, 1) for o in outs)
        assert model.kind == arch
        state = model.state_dict()
        model.load_state_dict(state)
