"""NumPy implementations of the hot kernels.

The compiled extension (`home_equiv.kernels._core`) mirrors these functions
with identical per-element expression ordering, so both backends produce
bit-identical results. Keep the two files in sync: any change to an
arithmetic expression here must be replicated in `_core.pyx`.
"""

import numpy as np

W_EPS = 1e-12
KSQ_EPS = 1e-24  # squared threshold for ||k|| < 1e-12


def bilinear_warp(src, hinv):
    """Inverse-mapping warp of a 2D image with bilinear sampling.

    For each destination pixel (x, y) the source location is
    hinv @ (x, y, 1) after perspective division; the four surrounding
    source pixels are blended bilinearly, with out-of-bounds taps
    contributing zero. A degenerate divisor (|w| < 1e-12) yields zero.
    """
    h, w = src.shape
    x = np.arange(w, dtype=np.float64)[None, :]
    y = np.arange(h, dtype=np.float64)[:, None]
    a, b, c = hinv[0]
    d, e, f = hinv[1]
    p, q, r = hinv[2]

    den = (p * x + q * y) + r
    ok = np.abs(den) >= W_EPS
    safe = np.where(ok, den, 1.0)
    sx = ((a * x + b * y) + c) / safe
    sy = ((d * x + e * y) + f) / safe

    ix = np.floor(sx)
    iy = np.floor(sy)
    fx = sx - ix
    fy = sy - iy
    ix = ix.astype(np.int64)
    iy = iy.astype(np.int64)

    out = np.zeros((h, w), dtype=np.float64)
    acc = np.zeros((h, w), dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            jx = ix + dx
            jy = iy + dy
            inside = (jx >= 0) & (jx < w) & (jy >= 0) & (jy < h)
            vals = src[np.clip(jy, 0, h - 1), np.clip(jx, 0, w - 1)]
            vals = np.where(inside, vals, 0.0)
            wx = fx if dx == 1 else 1.0 - fx
            wy = fy if dy == 1 else 1.0 - fy
            acc = acc + (wx * wy) * vals
    out[ok] = acc[ok]
    return out


def vn_gate_forward(qv, kv, n):
    """Direction-gated nonlinearity over packed coordinate planes.

    `qv` and `kv` are (rows, 3n) arrays laid out as [X | Y | Z] planes.
    Per row and channel c: with d = <q_c, k_c> and s = ||k_c||^2, the
    output is q_c when d >= 0 or s < 1e-24, else q_c - (d/s) k_c.
    """
    qx, qy, qz = qv[:, :n], qv[:, n:2 * n], qv[:, 2 * n:]
    kx, ky, kz = kv[:, :n], kv[:, n:2 * n], kv[:, 2 * n:]
    d = (qx * kx + qy * ky) + qz * kz
    s = (kx * kx + ky * ky) + kz * kz
    gate = (d < 0.0) & (s >= KSQ_EPS)
    t = np.where(gate, d / np.where(s >= KSQ_EPS, s, 1.0), 0.0)
    out = np.empty_like(qv)
    out[:, :n] = np.where(gate, qx - t * kx, qx)
    out[:, n:2 * n] = np.where(gate, qy - t * ky, qy)
    out[:, 2 * n:] = np.where(gate, qz - t * kz, qz)
    return out


def vn_gate_backward(gout, qv, kv, n):
    """Gradients of vn_gate_forward with respect to q and k planes."""
    qx, qy, qz = qv[:, :n], qv[:, n:2 * n], qv[:, 2 * n:]
    kx, ky, kz = kv[:, :n], kv[:, n:2 * n], kv[:, 2 * n:]
    gx, gy, gz = gout[:, :n], gout[:, n:2 * n], gout[:, 2 * n:]
    d = (qx * kx + qy * ky) + qz * kz
    s = (kx * kx + ky * ky) + kz * kz
    gate = (d < 0.0) & (s >= KSQ_EPS)
    ssafe = np.where(s >= KSQ_EPS, s, 1.0)
    gk_dot = (gx * kx + gy * ky) + gz * kz
    t1 = np.where(gate, gk_dot / ssafe, 0.0)     # <g,k>/s
    t3 = np.where(gate, d / ssafe, 0.0)          # d/s
    t2 = ((2.0 * d) * t1) / ssafe                # 2 d <g,k> / s^2

    gq = np.empty_like(gout)
    gq[:, :n] = np.where(gate, gx - t1 * kx, gx)
    gq[:, n:2 * n] = np.where(gate, gy - t1 * ky, gy)
    gq[:, 2 * n:] = np.where(gate, gz - t1 * kz, gz)

    gk = np.zeros_like(gout)
    gk[:, :n] = np.where(gate, (t2 * kx - t1 * qx) - t3 * gx, 0.0)
    gk[:, n:2 * n] = np.where(gate, (t2 * ky - t1 * qy) - t3 * gy, 0.0)
    gk[:, 2 * n:] = np.where(gate, (t2 * kz - t1 * qz) - t3 * gz, 0.0)
    return gq, gk


def adam_update(p, m, v, g, lr, beta1, beta2, eps, bc1, bc2):
    """One fused Adam step, updating p, m, v in place.

    bc1 = 1 - beta1**t and bc2 = 1 - beta2**t are the bias corrections,
    computed by the caller so both backends share the identical scalars.
    """
    omb1 = 1.0 - beta1
    omb2 = 1.0 - beta2
    t1 = omb1 * g
    np.multiply(m, beta1, out=m)
    np.add(m, t1, out=m)
    t2 = omb2 * (g * g)
    np.multiply(v, beta2, out=v)
    np.add(v, t2, out=v)
    denom = np.sqrt(v / bc2) + eps
    step = lr * (m / bc1)
    np.subtract(p, step / denom, out=p)
