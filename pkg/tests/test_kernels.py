import math
import os
import subprocess
import sys

import numpy as np
import pytest

from home_equiv import kernels
from home_equiv.kernels import fallback

core = kernels.compiled_or_none()
needs_core = pytest.mark.skipif(core is None, reason="compiled core not built")


# ---- scalar oracles ----

def gate_oracle(q, k, n):
    rows = q.shape[0]
    out = np.zeros_like(q)
    for i in range(rows):
        for c in range(n):
            qv = np.array([q[i, c], q[i, c + n], q[i, c + 2 * n]])
            kv = np.array([k[i, c], k[i, c + n], k[i, c + 2 * n]])
            d = float(qv @ kv)
            s = float(kv @ kv)
            res = qv if (d >= 0.0 or s < 1e-24) else qv - (d / s) * kv
            out[i, c], out[i, c + n], out[i, c + 2 * n] = res
    return out


def warp_oracle(src, hinv):
    h, w = src.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            den = hinv[2, 0] * x + hinv[2, 1] * y + hinv[2, 2]
            if abs(den) < 1e-12:
                continue
            sx = (hinv[0, 0] * x + hinv[0, 1] * y + hinv[0, 2]) / den
            sy = (hinv[1, 0] * x + hinv[1, 1] * y + hinv[1, 2]) / den
            ix, iy = int(np.floor(sx)), int(np.floor(sy))
            fx, fy = sx - ix, sy - iy
            acc = 0.0
            for dy, wy in ((0, 1 - fy), (1, fy)):
                for dx, wx in ((0, 1 - fx), (1, fx)):
                    jx, jy = ix + dx, iy + dy
                    val = src[jy, jx] if 0 <= jx < w and 0 <= jy < h else 0.0
                    acc += (wx * wy) * val
            out[y, x] = acc
    return out


def adam_scalar_oracle(p, m, v, g, lr, b1, b2, eps, t):
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    p = p - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return p, m, v


def _rand_planes(rng, rows=7, n=5):
    return (rng.normal(size=(rows, 3 * n)), rng.normal(size=(rows, 3 * n)))


# ---- fallback matches the scalar oracles ----

def test_fallback_gate_matches_oracle():
    rng = np.random.default_rng(0)
    q, k = _rand_planes(rng)
    got = fallback.vn_gate_forward(q, k, 5)
    assert np.max(np.abs(got - gate_oracle(q, k, 5))) < 1e-14


def test_fallback_warp_matches_oracle():
    rng = np.random.default_rng(1)
    src = rng.uniform(0, 1, (11, 13))
    hinv = np.array([[0.8, 0.1, 1.0], [-0.05, 1.1, -2.0], [0.001, 0.0, 1.0]])
    got = fallback.bilinear_warp(src, np.ascontiguousarray(hinv))
    assert np.max(np.abs(got - warp_oracle(src, hinv))) < 1e-13


def test_fallback_adam_matches_oracle():
    rng = np.random.default_rng(2)
    p = rng.normal(size=6)
    m = np.zeros(6)
    v = np.zeros(6)
    p0 = p.copy()
    want = [adam_scalar_oracle(p0[i], 0.0, 0.0, 0.5 * (i + 1), 0.01, 0.9,
                               0.999, 1e-8, 1) for i in range(6)]
    g = np.array([0.5 * (i + 1) for i in range(6)])
    fallback.adam_update(p, m, v, g, 0.01, 0.9, 0.999, 1e-8,
                         1 - 0.9, 1 - 0.999)
    for i in range(6):
        assert abs(p[i] - want[i][0]) < 1e-15
        assert abs(m[i] - want[i][1]) < 1e-15
        assert abs(v[i] - want[i][2]) < 1e-15


def test_gate_backward_matches_finite_difference():
    rng = np.random.default_rng(3)
    q, k = _rand_planes(rng, rows=3, n=2)
    gout = rng.normal(size=q.shape)
    gq, gk = fallback.vn_gate_backward(gout, q, k, 2)
    eps = 1e-6
    for arr, grad in ((q, gq), (k, gk)):
        flat = arr.ravel()
        for idx in range(0, flat.size, 3):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = float(np.sum(gout * fallback.vn_gate_forward(q, k, 2)))
            flat[idx] = orig - eps
            dn = float(np.sum(gout * fallback.vn_gate_forward(q, k, 2)))
            flat[idx] = orig
            numeric = (up - dn) / (2 * eps)
            assert abs(grad.ravel()[idx] - numeric) < 1e-5


# ---- compiled core is bit-identical to the fallback ----

@needs_core
def test_warp_backends_bit_identical():
    rng = np.random.default_rng(4)
    src = rng.uniform(0, 1, (16, 16))
    for _ in range(20):
        h = np.eye(3) + 0.1 * rng.normal(size=(3, 3))
        h[2, :2] *= 0.01
        h = np.ascontiguousarray(h / h[2, 2])
        assert np.array_equal(fallback.bilinear_warp(src, h),
                              core.bilinear_warp(src, h))


@needs_core
def test_gate_backends_bit_identical():
    rng = np.random.default_rng(5)
    for _ in range(20):
        q, k = _rand_planes(rng)
        g = rng.normal(size=q.shape)
        assert np.array_equal(fallback.vn_gate_forward(q, k, 5),
                              core.vn_gate_forward(q, k, 5))
        fa, fb = fallback.vn_gate_backward(g, q, k, 5), core.vn_gate_backward(g, q, k, 5)
        assert np.array_equal(fa[0], fb[0]) and np.array_equal(fa[1], fb[1])


@needs_core
def test_adam_backends_bit_identical_over_run():
    rng = np.random.default_rng(6)
    p1 = rng.normal(size=(4, 5))
    m1, v1 = np.zeros((4, 5)), np.zeros((4, 5))
    p2, m2, v2 = p1.copy(), m1.copy(), v1.copy()
    for t in range(1, 50):
        g = rng.normal(size=(4, 5))
        bc1, bc2 = 1 - 0.9 ** t, 1 - 0.999 ** t
        fallback.adam_update(p1, m1, v1, g, 0.003, 0.9, 0.999, 1e-8, bc1, bc2)
        core.adam_update(p2, m2, v2, g, 0.003, 0.9, 0.999, 1e-8, bc1, bc2)
    assert np.array_equal(p1, p2)
    assert np.array_equal(m1, m2)
    assert np.array_equal(v1, v2)


# ---- backend selection ----

def test_env_var_forces_fallback():
    code = ("import home_equiv.kernels as k; print(k.BACKEND)")
    env = dict(os.environ, HOME_EQUIV_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "fallback"


def test_backend_reports_name():
    assert kernels.BACKEND in ("compiled", "fallback")
    if core is not None:
        assert kernels.BACKEND == "compiled"
