"""Benchmark the numba and numpy kernel backends against each other.

Runs the convolution kernels over the shapes the translation networks
actually use, plus the thinning sweep, and prints a table of per-call
times for both backends. Interpretation on a typical 2-8 core box:
BLAS-backed im2col wins the convolution work, the JIT loops win the
small-grid thinning sweep.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from skelfont.kernels import numba_backend, numpy_backend

CONV_SHAPES = [
    # (label, n, c, h, f, k, stride, pad)
    ("stem 7x7 4->8 @32", 4, 4, 32, 8, 7, 1, 3),
    ("down 3x3 8->16 @32", 4, 8, 32, 16, 3, 2, 1),
    ("res 3x3 32->32 @8", 4, 32, 8, 32, 3, 1, 1),
    ("disc 4x4 3->8 @32", 4, 3, 32, 8, 4, 2, 1),
    ("paper res 3x3 256->256 @32", 1, 256, 32, 256, 3, 1, 1),
]

THIN_SIZES = [32, 128]


def _time(fn, repeat):
    fn()  # warm up (and JIT-compile)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench_conv(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for label, n, c, h, f, k, s, p in CONV_SHAPES:
        x = rng.standard_normal((n, c, h, h)).astype(np.float32)
        w = rng.standard_normal((f, c, k, k)).astype(np.float32)
        ho = (h + 2 * p - k) // s + 1
        gy = rng.standard_normal((n, f, ho, ho)).astype(np.float32)
        for op, args in (
            ("forward", (x, w, s, p)),
            ("input_grad", (gy, w, s, p, h, h)),
            ("weight_grad", (x, gy, s, p, k)),
        ):
            t_np = _time(lambda: getattr(numpy_backend, f"conv2d_{op}")(*args), repeat)
            t_nb = _time(lambda: getattr(numba_backend, f"conv2d_{op}")(*args), repeat)
            rows.append((f"conv {op:<11} {label}", t_np, t_nb))
    return rows


def bench_thin(repeat):
    rng = np.random.default_rng(1)
    rows = []
    for size in THIN_SIZES:
        grid = (rng.random((size, size)) < 0.4).astype(np.uint8)

        def sweep(backend, g=grid):
            bits = g
            for _ in range(4):
                bits, _ = backend.thin_subpass(bits, 0)
                bits, _ = backend.thin_subpass(bits, 1)
            return bits

        t_np = _time(lambda: sweep(numpy_backend), repeat)
        t_nb = _time(lambda: sweep(numba_backend), repeat)
        rows.append((f"thin 4 rounds @{size}x{size}", t_np, t_nb))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()

    rows = bench_conv(args.repeat) + bench_thin(args.repeat)
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'numba':>10}  numba/numpy")
    for label, t_np, t_nb in rows:
        print(f"{label:<{width}}  {t_np * 1e3:>8.3f}ms  {t_nb * 1e3:>8.3f}ms  "
              f"{t_nb / t_np:>10.2f}x")


if __name__ == "__main__":
    main()
