"""Fast invariant suite behind the `selfcheck` command.

Each check is seeded, runs in well under a second, and raises
AssertionError on violation; the runner prints one PASS/FAIL line per
property.
"""

from __future__ import annotations

import numpy as np

from . import geometry, kernels, tensor, vn
from .home_loss import build_chain_graph, home_loss
from .kernels import fallback


def _rng(seed):
    return np.random.default_rng(seed)


def _random_h(rng):
    return geometry.random_homography(rng, 16, 16)[0]


def random_rotation(rng) -> np.ndarray:
    """Uniform-ish 3D rotation: QR of a Gaussian, det corrected to +1."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def check_compose_associativity():
    rng = _rng(101)
    for _ in range(200):
        a, b, c = _random_h(rng), _random_h(rng), _random_h(rng)
        left = geometry.compose(geometry.compose(a, b), c).m
        right = geometry.compose(a, geometry.compose(b, c)).m
        assert np.max(np.abs(left - right)) < 1e-10


def check_inverse_roundtrip():
    rng = _rng(102)
    eye = np.eye(3)
    for _ in range(200):
        h = _random_h(rng)
        assert np.max(np.abs(geometry.compose(h, geometry.invert(h)).m - eye)) < 1e-10


def check_warp_identity():
    rng = _rng(103)
    img = rng.uniform(0.0, 1.0, (16, 16))
    out = geometry.warp_image(img, geometry.Homography.identity())
    assert np.array_equal(out, img)


def check_neighbor_chaining():
    rng = _rng(104)
    for _ in range(20):
        h_lc, h_cr = _random_h(rng), _random_h(rng)
        h_lr = geometry.compose(h_cr, h_lc)
        for _ in range(10):
            p = geometry.PointH(rng.uniform(-8, 24), rng.uniform(-8, 24), 1.0)
            direct = geometry.apply_euclidean(h_lr, p)
            step = geometry.apply(h_lc, p)
            chained = geometry.apply_euclidean(h_cr, step)
            assert max(abs(direct[0] - chained[0]), abs(direct[1] - chained[1])) < 1e-9


def check_vn_linear_right_action():
    rng = _rng(105)
    for _ in range(200):
        layer = vn.VNLinear(rng.normal(size=(5, 4)))
        v = rng.normal(size=(4, 3))
        act = rng.normal(size=(3, 3))
        lhs = vn.vn_linear(layer, v @ act.T)
        rhs = vn.vn_linear(layer, v) @ act.T
        assert np.max(np.abs(lhs - rhs)) < 1e-10


def check_vn_relu_rotation():
    rng = _rng(106)
    layer = vn.VNReLU(rng.normal(size=(6, 4)), rng.normal(size=(6, 4)))
    for _ in range(50):
        v = rng.normal(size=(4, 3))
        rot = random_rotation(rng)
        lhs = vn.vn_relu(layer, v @ rot.T)
        rhs = vn.vn_relu(layer, v) @ rot.T
        assert np.max(np.abs(lhs - rhs)) < 1e-9


def _grad_of(build, x0, seed):
    """Gradient-check a scalar graph functional of one leaf."""
    g = tensor.Graph()
    xid = g.leaf(x0)
    loss = build(g, xid)
    grad = g.backward(loss, wrt=[xid])[xid]

    def f(arr):
        g.set_leaf(xid, arr)
        g.forward()
        return float(g.value(loss))

    err = tensor.finite_diff_check(f, x0, grad)
    f(x0)  # restore
    assert err < 1e-6, f"gradient error {err} at seed {seed}"


def check_primitive_gradients():
    for seed in range(3):
        rng = _rng(300 + seed)
        y_const = rng.normal(size=(4, 2))
        _grad_of(lambda g, x: g.frobenius_sq(g.matmul(x, g.leaf(y_const))),
                 rng.normal(size=(3, 4)), seed)
        _grad_of(lambda g, x: g.frobenius_sq(g.add(x, g.leaf(rng.normal(size=(1, 4))))),
                 rng.normal(size=(3, 4)), seed)
        _grad_of(lambda g, x: g.frobenius_sq(g.sub(g.leaf(rng.normal(size=(3, 4))), x)),
                 rng.normal(size=(3, 4)), seed)
        _grad_of(lambda g, x: g.frobenius_sq(g.scale(x, 1.7)),
                 rng.normal(size=(3, 4)), seed)
        relu_in = rng.normal(size=(3, 4))
        relu_in = np.where(np.abs(relu_in) < 1e-3, relu_in + 0.25, relu_in)
        _grad_of(lambda g, x: g.frobenius_sq(g.relu(x)), relu_in, seed)
        _grad_of(lambda g, x: g.frobenius_sq(g.row_softmax(x)),
                 rng.normal(size=(3, 4)), seed)
        labels = rng.integers(0, 3, size=4)
        _grad_of(lambda g, x: g.cross_entropy(x, labels),
                 rng.normal(size=(4, 3)), seed)
        _grad_of(lambda g, x: g.frobenius_sq(x), rng.normal(size=(3, 4)), seed)
        _grad_of(lambda g, x: g.frobenius_sq(g.transpose(x)),
                 rng.normal(size=(3, 4)), seed)
        _grad_of(lambda g, x: g.frobenius_sq(g.concat_cols(x, g.leaf(rng.normal(size=(3, 2))))),
                 rng.normal(size=(3, 4)), seed)
        _grad_of(lambda g, x: g.frobenius_sq(g.slice_cols(x, 1, 3)),
                 rng.normal(size=(3, 4)), seed)


def _loss_oracle(reps, graph):
    """Scalar quadruple-loop reference implementation of the main loss."""
    total = 0.0
    for frame in reps:
        for i in range(graph.n_views):
            for j in sorted(graph.neighbors[i]):
                h = graph.h[(j, i)].m
                target = frame[i].T
                mapped = h @ frame[j].T
                for r in range(3):
                    for c in range(target.shape[1]):
                        diff = target[r, c] - mapped[r, c]
                        total += diff * diff
    return total


def _random_instance(rng, n_views=3, n=4, t_steps=2):
    homs = [_random_h(rng) for _ in range(n_views - 1)]
    graph = build_chain_graph(homs)
    reps = [[rng.normal(size=(n, 3)) for _ in range(n_views)]
            for _ in range(t_steps)]
    return reps, graph


def check_home_loss_oracle():
    rng = _rng(107)
    for _ in range(20):
        n_views = int(rng.integers(2, 5))
        n = int(rng.integers(1, 7))
        t_steps = int(rng.integers(1, 4))
        reps, graph = _random_instance(rng, n_views, n, t_steps)
        got, _ = home_loss(reps, graph)
        want = _loss_oracle(reps, graph)
        assert abs(got - want) <= 1e-10 * max(1.0, abs(want))


def check_home_loss_gradient():
    for seed in range(3):
        rng = _rng(400 + seed)
        reps, graph = _random_instance(rng, 3, 3, 1)
        _, grads = home_loss(reps, graph)
        for i in range(3):
            def f(arr, i=i):
                trial = [[arr if k == i else reps[0][k] for k in range(3)]]
                return home_loss(trial, graph)[0]
            err = tensor.finite_diff_check(f, reps[0][i], grads[0][i])
            assert err < 1e-6, f"home_loss grad error {err} (seed {seed}, view {i})"


def check_kernel_backend_parity():
    core = kernels.compiled_or_none()
    if core is None:
        return  # nothing to compare against
    rng = _rng(108)
    img = rng.uniform(0, 1, (16, 16))
    hinv = np.ascontiguousarray(geometry.invert(_random_h(rng)).m)
    assert np.array_equal(fallback.bilinear_warp(img, hinv),
                          core.bilinear_warp(img, hinv))
    q = rng.normal(size=(10, 12))
    k = rng.normal(size=(10, 12))
    g = rng.normal(size=(10, 12))
    assert np.array_equal(fallback.vn_gate_forward(q, k, 4),
                          core.vn_gate_forward(q, k, 4))
    fa = fallback.vn_gate_backward(g, q, k, 4)
    fb = core.vn_gate_backward(g, q, k, 4)
    assert np.array_equal(fa[0], fb[0]) and np.array_equal(fa[1], fb[1])
    p1, m1, v1 = rng.normal(size=8), np.zeros(8), np.zeros(8)
    p2, m2, v2 = p1.copy(), m1.copy(), v1.copy()
    grad = rng.normal(size=8)
    for t in range(1, 4):
        bc1, bc2 = 1 - 0.9 ** t, 1 - 0.999 ** t
        fallback.adam_update(p1, m1, v1, grad, 0.01, 0.9, 0.999, 1e-8, bc1, bc2)
        core.adam_update(p2, m2, v2, grad, 0.01, 0.9, 0.999, 1e-8, bc1, bc2)
    assert np.array_equal(p1, p2) and np.array_equal(m1, m2) and np.array_equal(v1, v2)


CHECKS = [
    ("compose_associativity", check_compose_associativity),
    ("inverse_roundtrip", check_inverse_roundtrip),
    ("warp_identity", check_warp_identity),
    ("neighbor_chaining", check_neighbor_chaining),
    ("vn_linear_right_action", check_vn_linear_right_action),
    ("vn_relu_rotation_equivariance", check_vn_relu_rotation),
    ("primitive_gradients", check_primitive_gradients),
    ("home_loss_oracle", check_home_loss_oracle),
    ("home_loss_gradient", check_home_loss_gradient),
    ("kernel_backend_parity", check_kernel_backend_parity),
]


def run_selfcheck(emit=print) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        try:
            fn()
        except Exception as exc:  # report and keep going
            all_ok = False
            emit(f"FAIL {name}: {exc}")
        else:
            emit(f"PASS {name}")
    return all_ok
