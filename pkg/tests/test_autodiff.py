import numpy as np
import pytest
import scipy.sparse as sp

from autodiff import ops
from autodiff.errors import AutodiffError, IndexOutOfRangeError, ShapeMismatchError, TapeMismatchError
from autodiff.gradcheck import grad_check, relu_margin
from autodiff.optim import adam_init, adam_step, cosine_lr
from autodiff.tensor import Tape

TOLERANCE = 1e-5


def _readout(t):
    """Scalar from any tensor through fixed random weights."""
    weights = np.random.default_rng(99).standard_normal(t.shape)
    return ops.sum_(ops.mul(t, weights))


def _away_from_zero(rng, shape):
    return rng.uniform(0.5, 1.5, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def test_scatter_sum_example() -> None:
    rows = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    out = ops.scatter_sum(rows, np.array([0, 0, 1]), 2)
    assert np.array_equal(out.value, [[4.0, 6.0], [5.0, 6.0]])
    with pytest.raises(IndexOutOfRangeError):
        ops.scatter_sum(rows, np.array([0, 2, 1]), 2)


def test_relu_subgradient() -> None:
    tape = Tape()
    x = tape.variable([2.0, -1.0, 0.0])
    grads = tape.backward(ops.sum_(ops.relu(x)))
    assert np.array_equal(grads[x], [1.0, 0.0, 0.0])
    assert tape.relu_margin == 0.0


def test_relu_margin_reports_distance_to_the_kink() -> None:
    def f(tensors):
        (w,) = tensors
        return ops.sum_(ops.relu(ops.mul(w, np.array([1.0, -0.25, 4.0]))))

    margin, largest = relu_margin(f, [np.array([0.5, 2.0, -1.0])])
    assert margin == pytest.approx(0.5)
    assert largest == pytest.approx(1.0)
    assert relu_margin(lambda ts: ops.sum_(ts[0]), [np.ones(2)]) == (float("inf"), 1.0)


def test_constants_are_not_recorded() -> None:
    out = ops.add(np.ones(3), np.ones(3))
    assert not out.tracked
    tape = Tape()
    x = tape.variable(np.ones(3))
    assert ops.mul(x, 2.0).tracked


@pytest.mark.parametrize(
    "name",
    [
        "matmul",
        "sparse_matmul",
        "add",
        "sub",
        "mul",
        "scale",
        "concat",
        "take_slice",
        "reshape",
        "relu",
        "softmax",
        "segment_softmax",
        "mul_rows",
        "gather_rows",
        "scatter_sum",
        "sum_axis",
        "mean",
        "sqrt",
        "mse",
        "rmse",
    ],
)
def test_every_op_matches_finite_differences(name) -> None:
    rng = np.random.default_rng(7)
    a = _away_from_zero(rng, (6, 4))
    b = _away_from_zero(rng, (6, 4))
    m = rng.standard_normal((4, 3))
    index = np.array([0, 2, 2, 5, 1, 0, 3])
    segments = np.array([0, 0, 1, 1, 1, 2, 2, 0])
    matrix = sp.random(5, 6, density=0.4, random_state=3, format="csr")

    cases = {
        "matmul": ([a, m], lambda x, y: ops.matmul(x, y)),
        "sparse_matmul": ([a], lambda x: ops.sparse_matmul(matrix, x)),
        "add": ([a, b[:1]], lambda x, y: ops.add(x, y)),
        "sub": ([a, b], lambda x, y: ops.sub(x, y)),
        "mul": ([a, b[:, :1]], lambda x, y: ops.mul(x, y)),
        "scale": ([a], lambda x: ops.scale(x, -1.7)),
        "concat": ([a, m.T], lambda x, y: ops.concat([x, y], axis=0)),
        "take_slice": ([a], lambda x: ops.take_slice(x, (slice(1, 4), slice(None, None, 2)))),
        "reshape": ([a], lambda x: ops.reshape(x, (3, 8))),
        "relu": ([a], lambda x: ops.relu(x)),
        "softmax": ([a], lambda x: ops.softmax(x)),
        "segment_softmax": ([a.reshape(-1)[:8]], lambda x: ops.segment_softmax(x, segments, 3)),
        "mul_rows": ([a, b[:, 0]], lambda x, w: ops.mul_rows(x, w)),
        "gather_rows": ([a], lambda x: ops.gather_rows(x, index)),
        "scatter_sum": ([a], lambda x: ops.scatter_sum(x, np.array([1, 0, 1, 3, 3, 0]), 4)),
        "sum_axis": ([a], lambda x: ops.sum_(x, axis=1)),
        "mean": ([a], lambda x: ops.mean(x)),
        "sqrt": ([np.abs(a)], lambda x: ops.sqrt(x)),
        "mse": ([a, b], lambda x, y: ops.mse(x, y)),
        "rmse": ([a, b], lambda x, y: ops.rmse(x, y)),
    }
    params, op = cases[name]
    assert grad_check(lambda ts: _readout(op(*ts)), params) <= TOLERANCE


def test_quadratic_is_exact(rng) -> None:
    x = rng.standard_normal(5)
    tape = Tape()
    v = tape.variable(x)
    grads = tape.backward(ops.sum_(ops.mul(v, v)))
    assert np.allclose(grads[v], 2.0 * x, atol=1e-12)
    assert grad_check(lambda ts: ops.sum_(ops.mul(ts[0], ts[0])), [x]) < 1e-8


def test_constant_function_has_zero_gradient() -> None:
    tape = Tape()
    x = tape.variable(np.ones(3))
    loss = ops.sum_(ops.constant(np.arange(3.0)))
    assert not loss.tracked
    grads = tape.backward(ops.add(loss, ops.scale(ops.sum_(x), 0.0)))
    assert np.array_equal(grads[x], np.zeros(3))
    assert grad_check(lambda ts: ops.add(ops.sum_(ops.scale(ts[0], 0.0)), 3.0), [np.ones(3)]) == 0.0


def test_two_layer_network(rng) -> None:
    x = rng.standard_normal((10, 3))
    y = rng.standard_normal((10, 1))
    w1 = rng.standard_normal((3, 8))
    w2 = rng.standard_normal((8, 1))

    def loss(ts):
        hidden = ops.softmax(ops.matmul(x, ts[0]))
        return ops.mse(ops.matmul(hidden, ts[1]), y)

    assert grad_check(loss, [w1, w2]) <= TOLERANCE


def test_backward_is_linear_in_the_loss(rng) -> None:
    a, b = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))

    def grads_of(build):
        tape = Tape()
        x = tape.variable(a)
        return tape.backward(build(x))[x]

    first = grads_of(lambda x: ops.mse(x, b))
    second = grads_of(lambda x: _readout(ops.mul(x, x)))
    both = grads_of(lambda x: ops.add(ops.mse(x, b), _readout(ops.mul(x, x))))
    assert np.abs(both - (first + second)).max() < 1e-12


def test_gather_then_scatter_is_adjacency_counting(rng) -> None:
    n = 12
    senders = rng.integers(0, n, size=40)
    receivers = rng.integers(0, n, size=40)
    x = rng.standard_normal((n, 3))
    counts = np.zeros((n, n))
    np.add.at(counts, (receivers, senders), 1.0)
    out = ops.scatter_sum(ops.gather_rows(x, senders), receivers, n)
    assert np.allclose(out.value, counts @ x, atol=1e-12)


def test_segment_softmax_sums_to_one(rng) -> None:
    segments = np.array([0, 1, 1, 2, 2, 2, 0])
    s = ops.segment_softmax(rng.standard_normal(7), segments, 3).value
    totals = np.zeros(3)
    np.add.at(totals, segments, s)
    assert np.allclose(totals, 1.0, atol=1e-12)


def test_shape_and_tape_errors() -> None:
    with pytest.raises(ShapeMismatchError):
        ops.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeMismatchError):
        ops.mse(np.ones(3), np.ones(4))
    first, second = Tape(), Tape()
    x, y = first.variable(np.ones(2)), second.variable(np.ones(2))
    with pytest.raises(TapeMismatchError):
        ops.add(x, y)
    with pytest.raises(AutodiffError):
        first.backward(ops.mul(x, 2.0))
    loss = ops.sum_(x)
    with pytest.raises(TapeMismatchError):
        first.backward(loss)[y]


def test_adam_null_update() -> None:
    params = [np.array([1.0, -2.0]), np.array([[0.5]])]
    state = adam_init(params, lr=1e-2, weight_decay=0.0)
    updated, _ = adam_step(params, [np.zeros(2), np.zeros((1, 1))], state)
    for before, after in zip(params, updated):
        assert np.array_equal(before, after)

    shrinking = adam_init(params, lr=1e-2, weight_decay=1e-3)
    updated, _ = adam_step(params, [np.zeros(2), np.zeros((1, 1))], shrinking)
    assert np.all(np.abs(updated[0]) < np.abs(params[0]))


def test_adam_first_step(rng) -> None:
    p = rng.standard_normal(6)
    g = rng.standard_normal(6)
    state = adam_init([p], lr=0.1, weight_decay=0.0)
    (updated,), state = adam_step([p], [g], state)
    assert state.step == 1
    assert np.allclose(updated, p - 0.1 * g / (np.abs(g) + state.eps), rtol=1e-12, atol=1e-14)


def test_adam_is_deterministic(rng) -> None:
    p, grads = rng.standard_normal(4), rng.standard_normal((5, 4))

    def run():
        params, state = [p.copy()], adam_init([p], lr=1e-2)
        for g in grads:
            params, state = adam_step(params, [g], state)
        return params[0]

    assert np.array_equal(run(), run())


def test_adam_shape_checks() -> None:
    state = adam_init([np.zeros(3)])
    with pytest.raises(ShapeMismatchError):
        adam_step([np.zeros(3)], [np.zeros(2)], state)


def test_cosine_schedule() -> None:
    assert cosine_lr(1e-3, 0, 100) == pytest.approx(1e-3)
    assert cosine_lr(1e-3, 50, 100) == pytest.approx(5e-4)
    assert cosine_lr(1e-3, 100, 100) == pytest.approx(0.0, abs=1e-18)
    assert cosine_lr(1e-3, 5, 0) == 1e-3
