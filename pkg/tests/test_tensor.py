import numpy as np
import pytest

from home_equiv.errors import BadConfig, NonScalarLoss, ShapeMismatch
from home_equiv.tensor import Graph, as_tensor, finite_diff_check


# ---- independent oracles ----

def matmul_oracle(a, b):
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for kk in range(k):
                out[i, j] += a[i, kk] * b[kk, j]
    return out


def softmax_row_oracle(row):
    m = max(row)
    e = [np.exp(v - m) for v in row]
    s = sum(e)
    return [v / s for v in e]


def cross_entropy_oracle(logits, labels):
    total = 0.0
    for row, label in zip(logits, labels):
        p = softmax_row_oracle(list(row))
        total += -np.log(p[label])
    return total / len(labels)


# ---- forward values ----

def test_frobenius_sq_example():
    g = Graph()
    x = g.leaf([[1.0, 2.0], [3.0, 4.0]])
    assert float(g.value(g.frobenius_sq(x))) == 30.0


def test_relu_example():
    g = Graph()
    x = g.leaf([[-1.0, 0.0, 2.0]])
    assert np.array_equal(g.value(g.relu(x)), [[0.0, 0.0, 2.0]])


def test_matmul_matches_triple_loop_oracle():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 5))
    b = rng.normal(size=(5, 3))
    g = Graph()
    out = g.value(g.matmul(g.leaf(a), g.leaf(b)))
    assert np.max(np.abs(out - matmul_oracle(a, b))) < 1e-12


def test_row_softmax_matches_oracle():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(3, 5))
    g = Graph()
    out = g.value(g.row_softmax(g.leaf(x)))
    assert np.allclose(out.sum(axis=1), 1.0)
    for i in range(3):
        assert np.max(np.abs(out[i] - softmax_row_oracle(list(x[i])))) < 1e-12


def test_cross_entropy_matches_oracle():
    rng = np.random.default_rng(2)
    logits = rng.normal(size=(6, 4))
    labels = rng.integers(0, 4, size=6)
    g = Graph()
    out = float(g.value(g.cross_entropy(g.leaf(logits), labels)))
    assert abs(out - cross_entropy_oracle(logits, labels)) < 1e-12


def test_concat_slice_transpose_roundtrip():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(3, 2))
    b = rng.normal(size=(3, 4))
    g = Graph()
    cat = g.concat_cols(g.leaf(a), g.leaf(b))
    assert np.array_equal(g.value(cat), np.hstack([a, b]))
    assert np.array_equal(g.value(g.slice_cols(cat, 2, 6)), b)
    assert np.array_equal(g.value(g.transpose(g.leaf(a))), a.T)


# ---- error contracts ----

def test_shape_mismatch_message_contains_both_shapes():
    g = Graph()
    a = g.leaf(np.zeros((2, 3)))
    b = g.leaf(np.zeros((4, 5)))
    with pytest.raises(ShapeMismatch) as err:
        g.matmul(a, b)
    assert "(2, 3)" in str(err.value) and "(4, 5)" in str(err.value)
    with pytest.raises(ShapeMismatch) as err:
        g.add(a, b)
    assert "(2, 3)" in str(err.value) and "(4, 5)" in str(err.value)


def test_non_scalar_loss_rejected():
    g = Graph()
    x = g.leaf(np.ones((2, 2)))
    with pytest.raises(NonScalarLoss):
        g.backward(x)


def test_nan_rejected_at_leaf():
    g = Graph()
    with pytest.raises(BadConfig):
        g.leaf([[np.nan]])
    with pytest.raises(BadConfig):
        as_tensor([np.inf])


def test_cross_entropy_label_bounds():
    g = Graph()
    with pytest.raises(BadConfig):
        g.cross_entropy(g.leaf(np.zeros((2, 3))), np.array([0, 3]))


# ---- gradients ----

def test_frobenius_gradient_is_2x():
    rng = np.random.default_rng(4)
    x0 = rng.normal(size=(3, 4))
    g = Graph()
    x = g.leaf(x0)
    loss = g.frobenius_sq(x)
    grads = g.backward(loss)
    assert np.max(np.abs(grads[x] - 2.0 * x0)) < 1e-14


def test_cross_entropy_gradient_identity():
    rng = np.random.default_rng(5)
    logits = rng.normal(size=(1, 5))
    labels = np.array([2])
    g = Graph()
    lid = g.leaf(logits)
    loss = g.cross_entropy(lid, labels)
    grad = g.backward(loss)[lid]
    soft = np.array(softmax_row_oracle(list(logits[0])))
    onehot = np.eye(5)[2]
    assert np.max(np.abs(grad[0] - (soft - onehot))) < 1e-12


def _random_composite_graph(rng):
    """A chain of <=5 random primitives over small random shapes."""
    rows = int(rng.integers(1, 7))
    cols = int(rng.integers(1, 7))
    g = Graph()
    x0 = rng.normal(size=(rows, cols))
    x = g.leaf(x0)
    cur = x
    shape = (rows, cols)
    for _ in range(int(rng.integers(1, 6))):
        op = rng.choice(["matmul", "add", "scale", "relu_safe", "transpose",
                         "concat", "slice", "softmax"])
        if op == "matmul":
            k = int(rng.integers(1, 7))
            cur = g.matmul(cur, g.leaf(rng.normal(size=(shape[1], k))))
            shape = (shape[0], k)
        elif op == "add":
            cur = g.add(cur, g.leaf(rng.normal(size=shape)))
        elif op == "scale":
            cur = g.scale(cur, float(rng.normal()))
        elif op == "relu_safe":
            # shift so entries sit away from the kink
            cur = g.relu(g.add(cur, g.leaf(np.full(shape, 0.05))))
        elif op == "transpose":
            cur = g.transpose(cur)
            shape = (shape[1], shape[0])
        elif op == "concat":
            extra = int(rng.integers(1, 4))
            cur = g.concat_cols(cur, g.leaf(rng.normal(size=(shape[0], extra))))
            shape = (shape[0], shape[1] + extra)
        elif op == "slice" and shape[1] > 1:
            cur = g.slice_cols(cur, 0, shape[1] - 1)
            shape = (shape[0], shape[1] - 1)
        elif op == "softmax":
            cur = g.row_softmax(cur)
    loss = g.frobenius_sq(cur)
    return g, x, x0, loss


def test_composite_graphs_pass_finite_difference():
    for seed in range(25):
        rng = np.random.default_rng(100 + seed)
        g, x, x0, loss = _random_composite_graph(rng)
        grad = g.backward(loss, wrt=[x])[x]

        def f(arr):
            g.set_leaf(x, arr)
            g.forward()
            return float(g.value(loss))

        err = finite_diff_check(f, x0, grad)
        assert err < 1e-6, f"seed {seed}: max relative error {err}"


def test_unreachable_leaf_gets_zero_gradient():
    g = Graph()
    x = g.leaf(np.ones((2, 2)))
    unused = g.leaf(np.ones((3, 3)))
    loss = g.frobenius_sq(x)
    grads = g.backward(loss)
    assert np.array_equal(grads[unused], np.zeros((3, 3)))


def test_add_broadcast_bias_gradient_sums_rows():
    rng = np.random.default_rng(6)
    x0 = rng.normal(size=(4, 3))
    b0 = rng.normal(size=(1, 3))
    g = Graph()
    x, b = g.leaf(x0), g.leaf(b0)
    loss = g.frobenius_sq(g.add(x, b))
    grads = g.backward(loss)
    assert np.max(np.abs(grads[b] - 2.0 * (x0 + b0).sum(axis=0, keepdims=True))) < 1e-12


# ---- replay and determinism ----

def test_forward_replay_is_bit_identical():
    rng = np.random.default_rng(7)
    g, x, x0, loss = _random_composite_graph(rng)
    first = g.value(loss).copy()
    g.forward()
    assert np.array_equal(g.value(loss), first)


def test_set_leaf_replay_matches_fresh_graph():
    rng = np.random.default_rng(8)
    a0 = rng.normal(size=(3, 3))
    b0 = rng.normal(size=(3, 3))

    def build(a_val):
        g = Graph()
        a, b = g.leaf(a_val), g.leaf(b0)
        return g, a, g.frobenius_sq(g.matmul(g.relu(a), b))

    g1, a1, loss1 = build(a0)
    new_val = rng.normal(size=(3, 3))
    g1.set_leaf(a1, new_val)
    g1.forward()
    g2, _, loss2 = build(new_val)
    assert np.array_equal(g1.value(loss1), g2.value(loss2))


def test_backward_deterministic():
    def run():
        rng = np.random.default_rng(9)
        g, x, x0, loss = _random_composite_graph(rng)
        return g.backward(loss)[x]
    assert np.array_equal(run(), run())


# ---- the finite-difference checker itself ----

def test_finite_diff_on_sum_of_squares():
    x = np.array([1.0, 2.0, 3.0])
    err = finite_diff_check(lambda v: float(np.sum(v * v)), x,
                            np.array([2.0, 4.0, 6.0]))
    assert err < 1e-9


def test_finite_diff_constant_function_is_exact():
    x = np.array([1.0, -2.0])
    assert finite_diff_check(lambda v: 7.5, x, np.zeros(2)) == 0.0
