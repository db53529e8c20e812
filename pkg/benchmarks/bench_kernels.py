"""Timing comparison of the compiled conv kernels vs the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]
Exercises im2col/col2im at the shapes the pixel encoders actually see,
plus a couple of stress shapes, and prints a table with the speedup.
"""

import argparse
import time

import numpy as np

from bicup import _kernels_py

try:
    from bicup import _kernels
except ImportError:
    _kernels = None

# (label, batch, channels, height, kernel, stride)
SHAPES = [
    ("actor frame stack 32x32", 1, 3, 32, 4, 2),
    ("snippet batch 32x32", 160, 3, 32, 4, 2),
    ("second conv stage 15x15", 160, 16, 15, 3, 2),
    ("wide batch 64x64", 32, 3, 64, 4, 2),
]


def once(impl, x, k, stride):
    c, h = x.shape[1], x.shape[2]
    cols = impl.im2col(x, k, k, stride)
    impl.col2im(cols, c, h, h, k, k, stride)


def bench(impl, x, k, stride, repeats):
    once(impl, x, k, stride)          # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        once(impl, x, k, stride)
    return (time.perf_counter() - t0) / repeats


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    if _kernels is None:
        print("compiled kernels not built; run pip install -e . first")

    rng = np.random.default_rng(0)
    print(f"{'shape':28s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s}")
    for label, b, c, h, k, stride in SHAPES:
        x = rng.standard_normal((b, c, h, h)).astype(np.float32)
        t_py = bench(_kernels_py, x, k, stride, args.repeats)
        row = f"{label:28s} {t_py * 1e3:9.2f}ms"
        if _kernels is not None:
            t_c = bench(_kernels, x, k, stride, args.repeats)
            row += f" {t_c * 1e3:9.2f}ms {t_py / t_c:7.2f}x"
            cols_py = _kernels_py.im2col(x, k, k, stride)
            cols_c = _kernels.im2col(x, k, k, stride)
            assert np.array_equal(cols_py, cols_c), label
        print(row)


if __name__ == "__main__":
    main()
