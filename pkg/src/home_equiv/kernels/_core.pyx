# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled twins of the NumPy kernels in fallback.py.

Per-element arithmetic uses the exact expression ordering of the fallback
(and the build disables FP contraction), so outputs are bit-identical
between backends. Keep in sync with fallback.py.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, floor, sqrt

W_EPS = 1e-12
KSQ_EPS = 1e-24

cdef double _W_EPS = 1e-12
cdef double _KSQ_EPS = 1e-24


def bilinear_warp(const double[:, ::1] src, const double[:, ::1] hinv):
    """Inverse-mapping warp with bilinear sampling; zero outside and on w ~ 0."""
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    cdef cnp.ndarray out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double a = hinv[0, 0], b = hinv[0, 1], c = hinv[0, 2]
    cdef double d = hinv[1, 0], e = hinv[1, 1], f = hinv[1, 2]
    cdef double p = hinv[2, 0], q = hinv[2, 1], r = hinv[2, 2]
    cdef Py_ssize_t yi, xi, ix, iy, jx, jy, dx, dy
    cdef double x, y, den, sx, sy, fx, fy, wx, wy, acc, val
    for yi in range(h):
        y = <double>yi
        for xi in range(w):
            x = <double>xi
            den = (p * x + q * y) + r
            if fabs(den) < _W_EPS:
                continue
            sx = ((a * x + b * y) + c) / den
            sy = ((d * x + e * y) + f) / den
            ix = <Py_ssize_t>floor(sx)
            iy = <Py_ssize_t>floor(sy)
            fx = sx - floor(sx)
            fy = sy - floor(sy)
            acc = 0.0
            for dy in range(2):
                for dx in range(2):
                    jx = ix + dx
                    jy = iy + dy
                    if 0 <= jx < w and 0 <= jy < h:
                        val = src[jy, jx]
                    else:
                        val = 0.0
                    wx = fx if dx == 1 else 1.0 - fx
                    wy = fy if dy == 1 else 1.0 - fy
                    acc = acc + (wx * wy) * val
            out[yi, xi] = acc
    return out_arr


def vn_gate_forward(const double[:, ::1] qv, const double[:, ::1] kv, Py_ssize_t n):
    """Direction-gated nonlinearity over packed [X|Y|Z] coordinate planes."""
    cdef Py_ssize_t rows = qv.shape[0]
    cdef cnp.ndarray out_arr = np.empty((rows, 3 * n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, c
    cdef double qx, qy, qz, kx, ky, kz, dd, s, t
    for i in range(rows):
        for c in range(n):
            qx = qv[i, c]; qy = qv[i, c + n]; qz = qv[i, c + 2 * n]
            kx = kv[i, c]; ky = kv[i, c + n]; kz = kv[i, c + 2 * n]
            dd = (qx * kx + qy * ky) + qz * kz
            s = (kx * kx + ky * ky) + kz * kz
            if dd < 0.0 and s >= _KSQ_EPS:
                t = dd / s
                out[i, c] = qx - t * kx
                out[i, c + n] = qy - t * ky
                out[i, c + 2 * n] = qz - t * kz
            else:
                out[i, c] = qx
                out[i, c + n] = qy
                out[i, c + 2 * n] = qz
    return out_arr


def vn_gate_backward(const double[:, ::1] gout, const double[:, ::1] qv, const double[:, ::1] kv,
                     Py_ssize_t n):
    """Gradients of vn_gate_forward with respect to the q and k planes."""
    cdef Py_ssize_t rows = qv.shape[0]
    cdef cnp.ndarray gq_arr = np.empty((rows, 3 * n), dtype=np.float64)
    cdef cnp.ndarray gk_arr = np.zeros((rows, 3 * n), dtype=np.float64)
    cdef double[:, ::1] gq = gq_arr
    cdef double[:, ::1] gk = gk_arr
    cdef Py_ssize_t i, c
    cdef double qx, qy, qz, kx, ky, kz, gx, gy, gz
    cdef double dd, s, gk_dot, t1, t2, t3
    for i in range(rows):
        for c in range(n):
            qx = qv[i, c]; qy = qv[i, c + n]; qz = qv[i, c + 2 * n]
            kx = kv[i, c]; ky = kv[i, c + n]; kz = kv[i, c + 2 * n]
            gx = gout[i, c]; gy = gout[i, c + n]; gz = gout[i, c + 2 * n]
            dd = (qx * kx + qy * ky) + qz * kz
            s = (kx * kx + ky * ky) + kz * kz
            if dd < 0.0 and s >= _KSQ_EPS:
                gk_dot = (gx * kx + gy * ky) + gz * kz
                t1 = gk_dot / s
                t3 = dd / s
                t2 = ((2.0 * dd) * t1) / s
                gq[i, c] = gx - t1 * kx
                gq[i, c + n] = gy - t1 * ky
                gq[i, c + 2 * n] = gz - t1 * kz
                gk[i, c] = (t2 * kx - t1 * qx) - t3 * gx
                gk[i, c + n] = (t2 * ky - t1 * qy) - t3 * gy
                gk[i, c + 2 * n] = (t2 * kz - t1 * qz) - t3 * gz
            else:
                gq[i, c] = gx
                gq[i, c + n] = gy
                gq[i, c + 2 * n] = gz
    return gq_arr, gk_arr


def adam_update(p, m, v, g, double lr, double beta1, double beta2, double eps,
                double bc1, double bc2):
    """One fused Adam step, updating p, m, v in place."""
    cdef double[::1] pv = p.reshape(-1)
    cdef double[::1] mv = m.reshape(-1)
    cdef double[::1] vv = v.reshape(-1)
    cdef const double[::1] gv = g.reshape(-1)
    cdef double omb1 = 1.0 - beta1
    cdef double omb2 = 1.0 - beta2
    cdef Py_ssize_t i, size = pv.shape[0]
    cdef double gi, denom, step
    for i in range(size):
        gi = gv[i]
        mv[i] = beta1 * mv[i] + omb1 * gi
        vv[i] = beta2 * vv[i] + omb2 * (gi * gi)
        denom = sqrt(vv[i] / bc2) + eps
        step = lr * (mv[i] / bc1)
        pv[i] = pv[i] - step / denom
