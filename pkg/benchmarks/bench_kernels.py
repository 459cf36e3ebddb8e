"""Benchmark the compiled kernel core against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N] [--train-epoch]

Times the three hot kernels on training-shaped inputs and, with
--train-epoch, one full equivariance-pretraining epoch under each backend
(the backend is chosen at import, so the epoch comparison re-executes this
script in a subprocess with HOME_EQUIV_PURE_PYTHON=1).
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from home_equiv.kernels import compiled_or_none, fallback


def bench(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_table(repeats):
    rng = np.random.default_rng(0)
    core = compiled_or_none()
    img = rng.uniform(0, 1, (64, 64))
    hinv = np.ascontiguousarray(np.array([[0.9, 0.05, 1.2],
                                          [-0.03, 1.1, -0.7],
                                          [0.0, 0.0, 1.0]]))
    q = rng.normal(size=(256, 48))
    k = rng.normal(size=(256, 48))
    g = rng.normal(size=(256, 48))
    p = rng.normal(size=(128, 256))
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    grad = rng.normal(size=p.shape)
    adam_args = (p, m, v, grad, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001)

    cases = [
        ("bilinear_warp 64x64", "bilinear_warp", (img, hinv)),
        ("vn_gate_forward 256x(3*16)", "vn_gate_forward", (q, k, 16)),
        ("vn_gate_backward 256x(3*16)", "vn_gate_backward", (g, q, k, 16)),
        ("adam_update 128x256", "adam_update", adam_args),
    ]
    print(f"{'kernel':32s} {'fallback':>12s} {'compiled':>12s} {'speedup':>9s}")
    for label, name, args in cases:
        t_fb = bench(getattr(fallback, name), args, repeats)
        if core is None:
            print(f"{label:32s} {t_fb * 1e6:10.1f}us {'n/a':>12s} {'n/a':>9s}")
            continue
        t_c = bench(getattr(core, name), args, repeats)
        print(f"{label:32s} {t_fb * 1e6:10.1f}us {t_c * 1e6:10.1f}us "
              f"{t_fb / t_c:8.2f}x")


def train_epoch_seconds():
    import tempfile

    from home_equiv import data, trainer
    with tempfile.TemporaryDirectory() as d:
        data.generate_dataset(d, seed=0, count=200)
        ds = data.load_dataset(d)
        cfg = trainer.TrainConfig(epochs=2, seed=0)
        t0 = time.perf_counter()
        trainer.pretrain(ds, cfg, os.path.join(d, "p.ckpt"))
        return (time.perf_counter() - t0) / 2.0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=30)
    ap.add_argument("--train-epoch", action="store_true",
                    help="also time one pretraining epoch per backend")
    ap.add_argument("--epoch-only", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.epoch_only:
        print(f"{train_epoch_seconds():.3f}")
        return

    from home_equiv.kernels import BACKEND
    print(f"active backend: {BACKEND}")
    kernel_table(args.repeats)

    if args.train_epoch:
        here = time.perf_counter()
        secs = train_epoch_seconds()
        print(f"\npretraining epoch (200 samples, active backend): {secs:.3f}s")
        env = dict(os.environ, HOME_EQUIV_PURE_PYTHON="1")
        out = subprocess.run(
            [sys.executable, __file__, "--epoch-only"], env=env,
            capture_output=True, text=True, check=True)
        print(f"pretraining epoch (200 samples, forced fallback): "
              f"{float(out.stdout.strip()):.3f}s")
        print(f"(comparison wall time {time.perf_counter() - here:.1f}s)")


if __name__ == "__main__":
    main()
