import numpy as np
import pytest

from home_equiv.errors import (GraphInvariantViolation, InconsistentShapes,
                               NegativeAlpha)
from home_equiv.geometry import Homography, compose, invert
from home_equiv.home_loss import (NeighborGraph, build_chain_graph, home_loss,
                                  total_loss)

from conftest import random_h


# ---- independent oracle: scalar quadruple loop ----

def loss_oracle(reps, graph):
    total = 0.0
    for frame in reps:
        for i in range(graph.n_views):
            for j in sorted(graph.neighbors[i]):
                h = graph.h[(j, i)].m
                own = frame[i].T          # 3 x n
                mapped = h @ frame[j].T
                for r in range(3):
                    for c in range(own.shape[1]):
                        d = own[r, c] - mapped[r, c]
                        total += d * d
    return total


def map_feature(h, feature):
    """Apply a homography to a feature's transposed form, plane by plane.

    Mirrors the loss's internal row-combination order so constructed fixed
    points are exact.
    """
    planes = [feature[:, 0], feature[:, 1], feature[:, 2]]
    cols = [(h.m[r, 0] * planes[0] + h.m[r, 1] * planes[1]) + h.m[r, 2] * planes[2]
            for r in range(3)]
    return np.stack(cols, axis=1)


def random_instance(rng, n_views, n, t_steps):
    graph = build_chain_graph([random_h(rng) for _ in range(n_views - 1)])
    reps = [[rng.normal(size=(n, 3)) for _ in range(n_views)]
            for _ in range(t_steps)]
    return reps, graph


# ---- chain graph construction ----

def test_chain_two_views():
    g = build_chain_graph([random_h(np.random.default_rng(0))])
    assert g.n_views == 2
    assert g.neighbors[0] == {1} and g.neighbors[1] == {0}


def test_chain_three_views_neighbor_sets():
    rng = np.random.default_rng(1)
    g = build_chain_graph([random_h(rng), random_h(rng)])
    assert g.neighbors[0] == {1}
    assert g.neighbors[1] == {0, 2}
    assert g.neighbors[2] == {1}


def test_chain_four_views_has_no_skip_edges():
    rng = np.random.default_rng(2)
    g = build_chain_graph([random_h(rng) for _ in range(3)])
    assert (0, 2) not in g.h and (0, 3) not in g.h
    assert 2 not in g.neighbors[0] and 3 not in g.neighbors[0]


def test_chain_inverse_consistency():
    rng = np.random.default_rng(3)
    g = build_chain_graph([random_h(rng) for _ in range(3)])
    for (i, j), h in g.h.items():
        assert np.max(np.abs(compose(h, g.h[(j, i)]).m - np.eye(3))) < 1e-10


def test_graph_invariant_violations():
    h = random_h(np.random.default_rng(4))
    with pytest.raises(GraphInvariantViolation):
        NeighborGraph(2, [{1}, set()], {(0, 1): h, (1, 0): invert(h)}).validate()
    with pytest.raises(GraphInvariantViolation):
        NeighborGraph(1, [{0}], {}).validate()
    bad = NeighborGraph(2, [{1}, {0}], {(0, 1): h, (1, 0): h})
    with pytest.raises(GraphInvariantViolation):
        bad.validate()


# ---- loss values ----

def test_identity_graph_identical_reps_is_zero():
    rng = np.random.default_rng(5)
    graph = build_chain_graph([Homography.identity()])
    rep = rng.normal(size=(4, 3))
    loss, grads = home_loss([[rep, rep.copy()]], graph)
    assert loss == 0.0
    assert np.array_equal(grads[0][0], np.zeros((4, 3)))


def test_constructed_fixed_point_is_zero():
    rng = np.random.default_rng(6)
    h_lc, h_cr = random_h(rng), random_h(rng)
    graph = build_chain_graph([h_lc, h_cr])
    rep_l = rng.normal(size=(5, 3))
    rep_c = map_feature(graph.h[(0, 1)], rep_l)   # exactly H_LC . rep_L^T
    rep_r = map_feature(graph.h[(1, 2)], rep_c)
    loss, _ = home_loss([[rep_l, rep_c, rep_r]], graph)
    # forward terms vanish exactly; reverse terms are bounded by the
    # inverse-consistency residual of invert()
    assert loss < 1e-18


def test_three_view_chain_matches_oracle():
    rng = np.random.default_rng(7)
    reps, graph = random_instance(rng, 3, 4, 2)
    got, _ = home_loss(reps, graph)
    want = loss_oracle(reps, graph)
    assert abs(got - want) <= 1e-10 * max(1.0, abs(want))


def test_loss_matches_oracle_across_sizes():
    rng = np.random.default_rng(8)
    for _ in range(60):
        n_views = int(rng.integers(2, 5))
        n = int(rng.integers(1, 7))
        t_steps = int(rng.integers(1, 4))
        reps, graph = random_instance(rng, n_views, n, t_steps)
        got, _ = home_loss(reps, graph)
        want = loss_oracle(reps, graph)
        assert abs(got - want) <= 1e-10 * max(1.0, abs(want))


def test_loss_nonnegative():
    rng = np.random.default_rng(9)
    for _ in range(50):
        reps, graph = random_instance(rng, 3, 3, 1)
        loss, _ = home_loss(reps, graph)
        assert loss >= 0.0


def test_ordered_pairs_both_counted():
    rng = np.random.default_rng(10)
    h = random_h(rng)
    graph = build_chain_graph([h])
    a, b = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    loss, _ = home_loss([[a, b]], graph)
    fwd = np.sum((a.T - graph.h[(1, 0)].m @ b.T) ** 2)
    rev = np.sum((b.T - graph.h[(0, 1)].m @ a.T) ** 2)
    assert abs(loss - (fwd + rev)) < 1e-10 * max(1.0, fwd + rev)


# ---- gradients ----

def test_gradient_passes_finite_difference():
    from home_equiv.tensor import finite_diff_check
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        reps, graph = random_instance(rng, 3, 3, 2)
        _, grads = home_loss(reps, graph)
        for t in range(2):
            for i in range(3):
                def f(arr, t=t, i=i):
                    trial = [[arr if (tt == t and k == i) else reps[tt][k]
                              for k in range(3)] for tt in range(2)]
                    return home_loss(trial, graph)[0]
                err = finite_diff_check(f, reps[t][i], grads[t][i])
                assert err < 1e-6, f"seed {seed} t={t} view={i}: {err}"


# ---- minimizer property ----

def descend_to_zero(reps, graph, steps=5000):
    """First-order descent (gradient + Nesterov momentum) on free reps.

    The loss is a homogeneous quadratic, so grad(v) = 2 H v; power
    iteration through the gradient estimates the top curvature, and the
    strongly-convex momentum schedule gives a linear rate even for the
    badly conditioned homographies the pixel-space generator produces.
    """
    n_views = graph.n_views
    shape = reps[0][0].shape
    dim = shape[0] * shape[1]

    def loss_grad(flat):
        frame = [flat[i * dim:(i + 1) * dim].reshape(shape)
                 for i in range(n_views)]
        loss, grads = home_loss([frame], graph)
        return loss, np.concatenate([g.ravel() for g in grads[0]])

    # the gradient map v -> grad(v) is linear; its top singular value is the
    # gradient Lipschitz constant L (= twice the top Hessian-form eigenvalue)
    rng = np.random.default_rng(0)
    v = rng.normal(size=n_views * dim)
    v /= np.linalg.norm(v)
    lip = 1.0
    for _ in range(120):
        _, g = loss_grad(v)
        lip = float(np.linalg.norm(g))
        v = g / lip
    lip *= 1.1              # power iteration approaches the top from below
    lr = 0.9 / lip
    kappa = max(lip, 1.0) / 0.5  # the nonzero curvature is bounded below ~1
    beta = (np.sqrt(kappa) - 1.0) / (np.sqrt(kappa) + 1.0)

    x = np.concatenate([reps[0][i].ravel() for i in range(n_views)])
    prev = x.copy()
    taken = steps
    for step in range(steps):
        y = x + beta * (x - prev)
        loss, g = loss_grad(y)
        prev = x
        x = y - lr * g
        if loss < 1e-10:
            taken = step + 1
            break
    return loss_grad(x)[0], taken


def test_descent_reaches_zero_loss():
    rng = np.random.default_rng(11)
    reps, graph = random_instance(rng, 3, 4, 1)
    final, steps = descend_to_zero(reps, graph)
    assert final < 1e-8, f"loss {final} after {steps} steps"


# ---- total loss ----

def test_total_loss_values():
    assert abs(total_loss(1.0, 2.0, 0.1) - 1.2) < 1e-15
    assert total_loss(3.5, 2.0, 0.0) == 3.5
    assert total_loss(0.0, 2.25, 1.0) == 2.25
    with pytest.raises(NegativeAlpha):
        total_loss(1.0, 1.0, -0.5)


# ---- shape validation ----

def test_inconsistent_shapes_rejected():
    rng = np.random.default_rng(12)
    graph = build_chain_graph([random_h(rng)])
    with pytest.raises(InconsistentShapes):
        home_loss([[rng.normal(size=(3, 3)), rng.normal(size=(4, 3))]], graph)
    with pytest.raises(InconsistentShapes):
        home_loss([[rng.normal(size=(3, 3))]], graph)
