import math

import numpy as np
import pytest

from adatt.tensor import (
    Adam,
    ShapeError,
    Tape,
    Tensor,
    add,
    bce_loss,
    concat,
    concat_rows,
    default_dtype,
    embedding,
    get_default_dtype,
    matmul,
    mean,
    mse_loss,
    mul,
    mul_scalar,
    no_grad,
    pad,
    relu,
    reshape,
    sigmoid,
    slice_axis,
    slice_rows,
    softmax_rows,
    stack,
    sum as tsum,
    transpose,
    weighted_sum,
)
from adatt.tensor.gradcheck import check_gradients, numerical_grad, relative_error


def param(rng, *shape, name="p"):
    return Tensor(rng.uniform(-2, 2, size=shape), requires_grad=True, name=name)


def test_matmul_examples():
    a = Tensor([[1.0, 0.0], [0.0, 1.0]])
    b = Tensor([[5.0, 6.0], [7.0, 8.0]])
    np.testing.assert_array_equal(matmul(a, b).data, [[5, 6], [7, 8]])
    assert matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(3, 4\).*\(5, 2\)"):
        matmul(Tensor(np.zeros((3, 4))), Tensor(np.zeros((5, 2))))


def test_elementwise_examples():
    np.testing.assert_allclose(softmax_rows(Tensor([[0.0, 0.0, 0.0]])).data, [[1 / 3] * 3], rtol=1e-6)
    assert relu(Tensor([[-1.0, 2.0]])).data.tolist() == [[0.0, 2.0]]
    assert float(sigmoid(Tensor([0.0])).data[0]) == 0.5


def test_default_float32_and_context():
    assert Tensor([1.0]).data.dtype == np.float32
    with default_dtype(np.float64):
        assert get_default_dtype() == np.float64
        assert Tensor([1.0]).data.dtype == np.float64
    assert get_default_dtype() == np.float32


def test_softmax_properties(rng):
    x = Tensor(rng.uniform(-30, 30, size=(50, 7)))
    s = softmax_rows(x).data
    assert np.all(s > 0)
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-6)
    # max subtraction keeps huge logits finite
    big = softmax_rows(Tensor([[1000.0, 0.0]])).data
    assert np.isfinite(big).all()
    np.testing.assert_allclose(big, [[1.0, 0.0]], atol=1e-6)


def test_softmax_empty_row_rejected():
    with pytest.raises(ShapeError):
        softmax_rows(Tensor(np.zeros((2, 0))))


def test_bce_examples():
    assert float(bce_loss(Tensor([[0.0]]), Tensor([[1.0]])).data) == pytest.approx(math.log(2), abs=1e-6)
    assert float(bce_loss(Tensor([[20.0]]), Tensor([[1.0]])).data) == pytest.approx(0.0, abs=1e-8)
    assert math.isfinite(float(bce_loss(Tensor([[20.0]]), Tensor([[0.0]])).data))
    assert float(bce_loss(Tensor([[800.0]]), Tensor([[0.0]])).data) == pytest.approx(800.0)


def test_bce_matches_double_precision_formula(rng):
    z = rng.uniform(-4, 4, size=(4, 1))
    y = rng.integers(0, 2, size=(4, 1)).astype(float)
    p = 1.0 / (1.0 + np.exp(-z))
    direct = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    got = float(bce_loss(Tensor(z), Tensor(y)).data)
    assert abs(got - direct) < 1e-6


def test_bce_rejects_non_binary_labels():
    with pytest.raises(ValueError):
        bce_loss(Tensor([[0.0], [1.0]]), Tensor([[0.5], [1.0]]))


def test_mse_examples():
    t = Tensor([[1.0], [2.0]])
    assert float(mse_loss(t, Tensor([[1.0], [2.0]])).data) == 0.0
    assert float(mse_loss(Tensor([[0.0], [2.0]]), Tensor([[0.0], [0.0]])).data) == pytest.approx(2.0)
    with pytest.raises(ShapeError):
        mse_loss(Tensor([[0.0], [2.0]]), Tensor([[0.0]]))


def test_add_shape_mismatch():
    with pytest.raises(ShapeError):
        add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))


def test_structural_ops_values():
    a = Tensor(np.arange(6.0).reshape(2, 3))
    b = Tensor(np.arange(6.0, 12.0).reshape(2, 3))
    np.testing.assert_array_equal(concat_rows([a, b]).data, np.vstack([a.data, b.data]))
    np.testing.assert_array_equal(concat([a, b], axis=1).data, np.hstack([a.data, b.data]))
    np.testing.assert_array_equal(stack([a, b], axis=1).data, np.stack([a.data, b.data], axis=1))
    np.testing.assert_array_equal(slice_rows(a, 1, 2).data, a.data[1:2])
    np.testing.assert_array_equal(pad(a, 1, 2).data[:, 1:4], a.data)
    assert pad(a, 1, 2).shape == (2, 6)
    assert float(tsum(a).data) == 15.0
    np.testing.assert_allclose(mean(a, axis=0).data, a.data.mean(axis=0))


# finite-difference gradient checks, one per op -----------------------------

def _unary_cases(rng):
    def const(*shape, lo=-2.0, hi=2.0):
        return Tensor(rng.uniform(lo, hi, size=shape))

    w, c34, c43, pos = const(4, 2), const(3, 4), const(4, 3), const(3, 4, lo=0.5)
    row, vec, c64, c38 = const(1, 4), const(4), const(6, 4), const(3, 8)
    c324, c37, c44 = const(3, 2, 4), const(3, 7), const(4, 4)
    ones32, ones34 = Tensor(np.ones((3, 2))), Tensor(np.ones((3, 4)))
    ind = np.array([0, 2, 2, 1])
    return {
        "matmul": lambda p: matmul(p, w),
        "transpose": lambda p: matmul(transpose(p), ones32),
        "reshape": lambda p: mul(reshape(p, (4, 3)), c43),
        "relu": lambda p: mul(relu(p), pos),
        "sigmoid": sigmoid,
        "softmax_rows": lambda p: mul(softmax_rows(p), c34),
        "mul_scalar": lambda p: mul_scalar(p, -1.7),
        "mul": lambda p: mul(p, p),
        "mul_broadcast": lambda p: mul(p, row),
        "add_broadcast": lambda p: mul(add(p, vec), p),
        "sub_neg": lambda p: mul(p - ones34, -p),
        "concat_rows": lambda p: mul(concat_rows([p, p]), c64),
        "concat": lambda p: mul(concat([p, mul_scalar(p, 2.0)], axis=1), c38),
        "stack": lambda p: mul(stack([p, mul(p, p)], axis=1), c324),
        "slice_rows": lambda p: mul(slice_rows(p, 1, 3), slice_rows(p, 0, 2)),
        "slice_axis": lambda p: mul(slice_axis(p, 1, 3, axis=1), slice_axis(p, 0, 2, axis=1)),
        "pad": lambda p: mul(pad(p, 2, 1), c37),
        "sum_axis": lambda p: mul(tsum(p, axis=1), tsum(p, axis=1)),
        "mean_axis": lambda p: mul(mean(p, axis=0), mean(p, axis=0)),
        "embedding_table": lambda p: mul(embedding(p, ind), c44),
    }


def _reduce(out):
    return tsum(mul(out, Tensor(np.linspace(-1, 1, out.data.size).reshape(out.shape))))


@pytest.mark.parametrize("name", list(_unary_cases(np.random.default_rng(0))))
def test_op_gradients_fd(name, f64):
    rng = np.random.default_rng(7)
    fn = _unary_cases(rng)[name]
    p = param(rng, 3, 4)
    if name == "relu":  # keep inputs away from the kink
        p.data[np.abs(p.data) < 0.05] = 0.3
    errs = check_gradients(lambda: _reduce(fn(p)), [p], step=1e-3)
    assert max(errs.values()) < 1e-3, errs


def test_weighted_sum_gradients_fd(f64, rng):
    w = param(rng, 5, 3, name="w")
    e = param(rng, 5, 3, 4, name="e")
    errs = check_gradients(lambda: _reduce(weighted_sum(w, e)), [w, e])
    assert max(errs.values()) < 1e-3, errs
    v = param(rng, 3, name="v")
    errs = check_gradients(lambda: _reduce(weighted_sum(v, e)), [v, e])
    assert max(errs.values()) < 1e-3, errs


def test_loss_gradients_fd(f64, rng):
    z = param(rng, 6, 1)
    y = Tensor(rng.integers(0, 2, size=(6, 1)).astype(float))
    assert max(check_gradients(lambda: bce_loss(z, y), [z]).values()) < 1e-3
    t = Tensor(rng.uniform(-2, 2, size=(6, 1)))
    assert max(check_gradients(lambda: mse_loss(z, t), [z]).values()) < 1e-3


def test_matmul_gradient_both_inputs(f64, rng):
    a, b = param(rng, 3, 4, name="a"), param(rng, 4, 2, name="b")
    errs = check_gradients(lambda: _reduce(matmul(a, b)), [a, b])
    assert max(errs.values()) < 1e-3


def test_gradcheck_detects_wrong_gradient(f64, rng):
    a = param(rng, 2, 2)
    analytic = np.ones((2, 2))
    numeric = numerical_grad(lambda: tsum(mul(a, a)), a)
    assert relative_error(analytic, numeric) > 1e-3


def test_backward_populates_every_reachable_grad(rng):
    a, b = param(rng, 2, 3, name="a"), param(rng, 3, 2, name="b")
    frozen = Tensor(rng.uniform(size=(2, 2)))
    h = matmul(a, b)
    loss = tsum(mul(h, frozen))
    loss.backward()
    assert a.grad.shape == a.shape and b.grad.shape == b.shape
    assert h.grad is not None and h.grad.shape == h.shape
    assert frozen.grad is None


def test_tape_visits_each_node_once(rng):
    a = param(rng, 4, 4)
    # a diamond: two paths through the same intermediate
    h = relu(a)
    loss = tsum(add(mul(h, h), sigmoid(h)))
    tape = Tape.record(loss)
    n_ops = 5  # relu, mul, sigmoid, add, sum
    assert tape.size == n_ops
    pos = {id(t): i for i, t in enumerate(tape.nodes)}
    for t in tape.nodes:
        for parent in t.node.inputs:
            if id(parent) in pos:
                assert pos[id(parent)] < pos[id(t)]
    tape.run(loss)
    assert tape.visits == n_ops


def test_tape_freed_after_backward(rng):
    a = param(rng, 2, 2)
    loss = tsum(mul(a, a))
    loss.backward()
    assert loss.node is None and loss.tape_id is None


def test_no_grad_records_nothing(rng):
    a = param(rng, 2, 2)
    with no_grad():
        out = mul(a, a)
    assert out.node is None and not out.requires_grad


def test_gradients_accumulate_across_backward_calls(rng):
    a = param(rng, 2, 2)
    tsum(a).backward()
    tsum(a).backward()
    np.testing.assert_array_equal(a.grad, 2 * np.ones((2, 2)))


def test_determinism_bit_identical():
    def run():
        rng = np.random.default_rng(11)
        a, b = param(rng, 8, 5), param(rng, 5, 3)
        loss = tsum(softmax_rows(matmul(a, b)))
        loss.backward()
        return loss.data.copy(), a.grad.copy(), b.grad.copy()

    first, second = run(), run()
    for x, y in zip(first, second):
        assert np.array_equal(x, y)


def test_adam_lr_zero_leaves_params(rng):
    a = param(rng, 3, 3)
    before = a.data.copy()
    opt = Adam([a], lr=0.0)
    tsum(mul(a, a)).backward()
    opt.step()
    assert np.array_equal(a.data, before)


def test_adam_minimises_quadratic(rng):
    a = param(rng, 4)
    opt = Adam([a], lr=0.05)
    for _ in range(500):
        opt.zero_grad()
        tsum(mul(a, a)).backward()
        opt.step()
    assert np.max(np.abs(a.data)) < 1e-2


def test_adam_first_step_matches_closed_form():
    # after one step with bias correction the update is lr * sign(g)
    a = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = Adam([a], lr=0.1)
    tsum(mul(a, a)).backward()
    opt.step()
    np.testing.assert_allclose(a.data, [0.9, -1.9], atol=1e-6)
