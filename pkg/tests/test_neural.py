import numpy as np
import pytest
from conftest import check_grad, param, rel_err
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from deepdta.neural import (
    AdamState,
    Tensor,
    adam_step,
    backward,
    concat,
    conv1d,
    dense,
    dropout,
    embedding,
    embedding_conv1d,
    gather_rows,
    global_max_pool,
    mse_loss,
    relu,
    tensor_sum,
)

# --- embedding ---------------------------------------------------------------

def test_embedding_zero_table():
    out = embedding([0, 0], Tensor(np.zeros((2, 3))))
    assert np.array_equal(out.data, np.zeros((2, 3)))


def test_embedding_row_selection():
    table = Tensor(np.array([[1.0, 0, 0], [0, 1, 0], [0, 0, 1]]))
    assert np.array_equal(embedding([1], table).data, [[0, 1, 0]])


def test_embedding_matches_row_copy(rng):
    table = Tensor(rng.normal(size=(10, 4)))
    idx = rng.integers(0, 10, 5)
    expected = np.empty((5, 4))
    for i, k in enumerate(idx):
        expected[i] = table.data[k].copy()
    assert np.array_equal(embedding(idx, table).data, expected)


def test_embedding_out_of_range_names_position():
    with pytest.raises(IndexError, match=r"position \(2,\)"):
        embedding([1, 2, 7], Tensor(np.zeros((4, 2))))


def test_embedding_grad_only_touches_looked_up_rows(rng):
    table = param(rng.normal(size=(6, 3)), "table")
    idx = np.array([0, 2, 2, 5])
    backward(tensor_sum(embedding(idx, table)))
    counts = np.bincount(idx, minlength=6)[:, None]
    assert np.array_equal(table.grad, np.broadcast_to(counts, (6, 3)))


# --- conv1d ------------------------------------------------------------------

def _conv_oracle(x, w, b):
    n_f, c_in, k = w.shape
    out = np.empty((x.shape[0] - k + 1, n_f))
    for t in range(out.shape[0]):
        for f in range(n_f):
            s = b[f]
            for c in range(c_in):
                for j in range(k):
                    s += x[t + j, c] * w[f, c, j]
            out[t, f] = s
    return out


def test_conv_box_filter():
    out = conv1d(Tensor(np.ones((4, 1))), Tensor(np.ones((1, 1, 2))), Tensor(np.zeros(1)))
    assert np.array_equal(out.data, [[2.0], [2.0], [2.0]])


def test_conv_zero_weights_gives_bias(rng):
    out = conv1d(Tensor(rng.normal(size=(7, 2))), Tensor(np.zeros((3, 2, 3))),
                 Tensor(np.array([0.5, -1.0, 2.0])))
    assert np.array_equal(out.data, np.tile([0.5, -1.0, 2.0], (5, 1)))


def test_conv_matches_direct_summation(rng):
    x, w, b = rng.normal(size=(10, 3)), rng.normal(size=(4, 3, 3)), rng.normal(size=4)
    out = conv1d(Tensor(x), Tensor(w), Tensor(b)).data
    assert np.abs(out - _conv_oracle(x, w, b)).max() < 1e-12


def test_conv_batched_equals_per_sample(rng):
    x, w, b = rng.normal(size=(3, 9, 2)), rng.normal(size=(5, 2, 4)), rng.normal(size=5)
    batched = conv1d(Tensor(x), Tensor(w), Tensor(b)).data
    for i in range(3):
        assert np.abs(batched[i] - _conv_oracle(x[i], w, b)).max() < 1e-12


def test_conv_too_short_names_block():
    with pytest.raises(ValueError, match="protein conv2"):
        conv1d(Tensor(np.ones((2, 1))), Tensor(np.ones((1, 1, 3))), where="protein conv2")


def test_conv_gradients(rng):
    x = param(rng.normal(size=(2, 9, 3)), "x")
    w = param(rng.normal(size=(4, 3, 3)), "w")
    b = param(rng.normal(size=4), "b")
    proj = rng.normal(size=(2, 7, 4))
    check_grad(lambda: tensor_sum(_times(conv1d(x, w, b), proj)), [x, w, b])


def test_conv_gradients_wide_filters(rng):
    # more filters than channels takes the other weight-gradient path
    x = param(rng.normal(size=(8, 2)), "x")
    w = param(rng.normal(size=(5, 2, 2)), "w")
    proj = rng.normal(size=(7, 5))
    check_grad(lambda: tensor_sum(_times(conv1d(x, w), proj)), [x, w])


def _times(t, arr):
    """Elementwise product with a constant, as a differentiable op (test helper)."""
    from deepdta.neural.tensor import make_result
    return make_result(t.data * arr, (t,), lambda g: (g * arr,))


# --- fused embedding + conv ----------------------------------------------------

def test_embedding_conv_matches_composition(rng):
    table = param(rng.normal(size=(7, 4)), "table")
    w = param(rng.normal(size=(3, 4, 3)), "w")
    b = param(rng.normal(size=3), "b")
    idx = rng.integers(0, 7, (5, 11))
    fused = embedding_conv1d(idx, table, w, b)
    plain = conv1d(embedding(idx, table), w, b)
    assert np.abs(fused.data - plain.data).max() < 1e-12
    proj = rng.normal(size=fused.shape)
    backward(tensor_sum(_times(fused, proj)))
    fused_grads = [t.grad.copy() for t in (table, w, b)]
    for t in (table, w, b):
        t.grad = None
    backward(tensor_sum(_times(conv1d(embedding(idx, table), w, b), proj)))
    for g, t in zip(fused_grads, (table, w, b)):
        assert np.abs(g - t.grad).max() < 1e-10


def test_embedding_conv_gradients(rng):
    table = param(rng.normal(size=(6, 3)), "table")
    w = param(rng.normal(size=(2, 3, 2)), "w")
    idx = rng.integers(0, 6, (2, 6))
    proj = rng.normal(size=(2, 5, 2))
    check_grad(lambda: tensor_sum(_times(embedding_conv1d(idx, table, w), proj)), [table, w])


# --- relu --------------------------------------------------------------------

def test_relu_values():
    assert np.array_equal(relu(Tensor(np.array([-1.0, 0.0, 2.0]))).data, [0, 0, 2])


def test_relu_all_negative_zero_grad():
    x = param([-3.0, -1.0, -0.5])
    out = relu(x)
    backward(tensor_sum(out))
    assert np.array_equal(out.data, np.zeros(3)) and np.array_equal(x.grad, np.zeros(3))


def test_relu_subgradient_at_zero_is_zero():
    x = param([0.0, 1.0])
    backward(tensor_sum(relu(x)))
    assert np.array_equal(x.grad, [0.0, 1.0])


def test_relu_gradient_away_from_kink(rng):
    v = rng.normal(size=20)
    v[np.abs(v) < 0.1] += 0.5
    x = param(v, "x")
    proj = rng.normal(size=20)
    check_grad(lambda: tensor_sum(_times(relu(x), proj)), [x], tol=1e-6)


# --- max pool ------------------------------------------------------------------

def test_max_pool_values():
    assert np.array_equal(global_max_pool(Tensor(np.array([[1.0, 5], [3, 2]]))).data, [3, 5])


def test_max_pool_single_step_identity():
    assert np.array_equal(global_max_pool(Tensor(np.array([[4.0, -2.0]]))).data, [4.0, -2.0])


def test_max_pool_matches_scan(rng):
    x = rng.normal(size=(50, 96))
    expected = np.empty(96)
    for c in range(96):
        best = x[0, c]
        for t in range(1, 50):
            if x[t, c] > best:
                best = x[t, c]
        expected[c] = best
    assert np.array_equal(global_max_pool(Tensor(x)).data, expected)


def test_max_pool_ties_route_to_first():
    x = param([[2.0], [2.0], [1.0]])
    backward(tensor_sum(global_max_pool(x)))
    assert np.array_equal(x.grad, [[1.0], [0.0], [0.0]])


def test_max_pool_empty_errors():
    with pytest.raises(ValueError):
        global_max_pool(Tensor(np.zeros((0, 3))))


def test_max_pool_gradient(rng):
    x = param(rng.normal(size=(3, 12, 4)), "x")
    proj = rng.normal(size=(3, 4))
    check_grad(lambda: tensor_sum(_times(global_max_pool(x), proj)), [x])


# --- dense -------------------------------------------------------------------------

def test_dense_identity():
    x = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(dense(Tensor(x), Tensor(np.eye(3)), Tensor(np.zeros(3))).data, x)


def test_dense_zero_input_gives_bias():
    b = np.array([0.1, 0.2])
    assert np.array_equal(dense(Tensor(np.zeros(4)), Tensor(np.ones((2, 4))), Tensor(b)).data, b)


def test_dense_matches_dot_products(rng):
    x, w, b = rng.normal(size=8), rng.normal(size=(5, 8)), rng.normal(size=5)
    expected = np.array([sum(w[o, i] * x[i] for i in range(8)) + b[o] for o in range(5)])
    assert np.abs(dense(Tensor(x), Tensor(w), Tensor(b)).data - expected).max() < 1e-12


def test_dense_shape_mismatch_mentions_shapes():
    with pytest.raises(ValueError, match=r"\(3,\).*\(2, 4\)"):
        dense(Tensor(np.zeros(3)), Tensor(np.zeros((2, 4))))


def test_dense_gradient(rng):
    x = param(rng.normal(size=(4, 6)), "x")
    w = param(rng.normal(size=(3, 6)), "w")
    b = param(rng.normal(size=3), "b")
    proj = rng.normal(size=(4, 3))
    check_grad(lambda: tensor_sum(_times(dense(x, w, b), proj)), [x, w, b])


# --- dropout ------------------------------------------------------------------------

def test_dropout_rate_zero_is_identity(rng):
    x = Tensor(rng.normal(size=10))
    assert dropout(x, 0.0, True, rng) is x


def test_dropout_eval_is_identity(rng):
    x = Tensor(rng.normal(size=10))
    assert dropout(x, 0.5, False) is x


def test_dropout_expectation():
    out = dropout(Tensor(np.ones(10 ** 6)), 0.1, True, np.random.default_rng(0))
    assert abs(out.data.mean() - 1.0) < 0.01
    survivors = out.data[out.data != 0]
    assert np.allclose(survivors, 1 / 0.9)


@pytest.mark.parametrize("rate", [-0.1, 1.0, 1.5])
def test_dropout_bad_rate(rate):
    with pytest.raises(ValueError):
        dropout(Tensor(np.ones(3)), rate, True, np.random.default_rng(0))


def test_dropout_backward_uses_mask():
    x = param(np.ones(1000))
    out = dropout(x, 0.3, True, np.random.default_rng(5))
    backward(tensor_sum(out))
    assert np.array_equal(x.grad, out.data)


# --- concat ---------------------------------------------------------------------------

def test_concat_values():
    assert np.array_equal(concat(Tensor(np.array([1.0, 2])), Tensor(np.array([3.0]))).data, [1, 2, 3])


def test_concat_empty_left():
    x = np.array([4.0, 5.0])
    assert np.array_equal(concat(Tensor(np.zeros(0)), Tensor(x)).data, x)


def test_concat_rank_mismatch():
    with pytest.raises(ValueError):
        concat(Tensor(np.zeros(2)), Tensor(np.zeros((1, 2))))


def test_concat_gradient_split(rng):
    a, b = param(rng.normal(size=3), "a"), param(rng.normal(size=4), "b")
    proj = rng.normal(size=7)
    check_grad(lambda: tensor_sum(_times(concat(a, b), proj)), [a, b], tol=1e-6)


# --- mse ------------------------------------------------------------------------------

def test_mse_zero_when_equal(rng):
    y = rng.normal(size=5)
    assert float(mse_loss(Tensor(y), y).data) == 0.0


def test_mse_hand_value():
    assert float(mse_loss(Tensor(np.array([1.0, 3.0])), np.zeros(2)).data) == 5.0


def test_mse_matches_two_pass(rng):
    p, y = rng.normal(size=100), rng.normal(size=100)
    total = 0.0
    for a, b in zip(p, y):
        total += (a - b) ** 2
    assert rel_err(float(mse_loss(Tensor(p), y).data), total / 100) < 1e-12


def test_mse_length_mismatch():
    with pytest.raises(ValueError):
        mse_loss(Tensor(np.zeros(3)), np.zeros(2))


def test_mse_gradient(rng):
    p = param(rng.normal(size=6), "p")
    y = rng.normal(size=6)
    mse_loss(p, y).backward()
    assert np.allclose(p.grad, (2 / 6) * (p.data - y), rtol=1e-14, atol=0)


# quarter-grid values keep squared differences clear of float underflow
_grid = st.integers(-4000, 4000).map(lambda v: v / 4)


@given(arrays(np.float64, st.integers(1, 20), elements=_grid),
       arrays(np.float64, st.integers(1, 20), elements=_grid))
def test_mse_nonnegative_zero_iff_equal(p, y):
    n = min(p.size, y.size)
    p, y = p[:n], y[:n]
    v = float(mse_loss(Tensor(p), y).data)
    assert v >= 0
    assert (v == 0) == bool(np.all(p == y))


# --- backward ---------------------------------------------------------------------------

def test_backward_sum_gives_ones(rng):
    x = param(rng.normal(size=(3, 4)))
    backward(tensor_sum(x))
    assert np.array_equal(x.grad, np.ones((3, 4)))


def test_backward_detached_parameter_grad_is_zero(rng):
    x, unused = param(rng.normal(size=3)), param(rng.normal(size=3))
    backward(tensor_sum(x))
    assert unused.grad is None or not unused.grad.any()


def test_backward_non_scalar_errors():
    with pytest.raises(ValueError):
        backward(relu(param([1.0, 2.0])))


def test_backward_accumulates_across_calls(rng):
    x = param(rng.normal(size=3))
    backward(tensor_sum(x))
    backward(tensor_sum(x))
    assert np.array_equal(x.grad, np.full(3, 2.0))


def test_backward_shared_subexpression(rng):
    x = param(rng.normal(size=4), "x")
    check_grad(lambda: tensor_sum(concat(relu(x), relu(x))), [x])


def test_gather_rows_gradient(rng):
    x = param(rng.normal(size=(3, 2)), "x")
    rows = np.array([0, 2, 2, 1, 2])
    proj = rng.normal(size=(5, 2))
    check_grad(lambda: tensor_sum(_times(gather_rows(x, rows), proj)), [x])


# --- linearity ---------------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10 ** 6))
def test_conv_and_dense_are_linear(alpha, beta, seed):
    r = np.random.default_rng(seed)
    w, wd = Tensor(r.normal(size=(3, 2, 3))), Tensor(r.normal(size=(4, 5)))
    x, y = r.normal(size=(6, 2)), r.normal(size=(6, 2))
    lhs = conv1d(Tensor(alpha * x + beta * y), w).data
    rhs = alpha * conv1d(Tensor(x), w).data + beta * conv1d(Tensor(y), w).data
    assert np.abs(lhs - rhs).max() < 1e-10
    u, v = r.normal(size=5), r.normal(size=5)
    lhs = dense(Tensor(alpha * u + beta * v), wd).data
    rhs = alpha * dense(Tensor(u), wd).data + beta * dense(Tensor(v), wd).data
    assert np.abs(lhs - rhs).max() < 1e-10


# --- adam ------------------------------------------------------------------------------

def test_adam_zero_gradient_leaves_params():
    p = param([1.0, -2.0])
    p.grad = np.zeros(2)
    adam_step([("p", p)], AdamState())
    assert np.array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_magnitude_is_lr():
    p = param([0.5])
    p.grad = np.ones(1)
    state = AdamState(learning_rate=0.001)
    adam_step([("p", p)], state)
    assert abs((0.5 - p.data[0]) - 0.001) < 1e-9
    assert state.step_count == 1


def test_adam_converges_on_quadratic():
    w = param([0.0])
    state = AdamState(learning_rate=0.1)
    for _ in range(200):
        w.grad = 2 * (w.data - 3.0)
        adam_step([("w", w)], state)
    assert abs(w.data[0] - 3.0) < 1e-2
    assert state.step_count == 200


def test_adam_missing_gradient_names_parameter():
    with pytest.raises(ValueError, match="'fc1.weights'"):
        adam_step([("fc1.weights", param([1.0]))], AdamState())


def test_adam_leaves_gradients_untouched():
    p = param([1.0])
    p.grad = np.array([0.3])
    adam_step([("p", p)], AdamState())
    assert p.grad[0] == 0.3


def test_adam_matches_textbook_update(rng):
    theta = rng.normal(size=4)
    grads = [rng.normal(size=4) for _ in range(5)]
    p = param(theta.copy())
    state = AdamState(learning_rate=0.01)
    m = np.zeros(4)
    v = np.zeros(4)
    for t, g in enumerate(grads, 1):
        p.grad = g
        adam_step([("p", p)], state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        theta = theta - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert np.allclose(p.data, theta, rtol=1e-12, atol=1e-15)
