#!/usr/bin/env python3
"""Benchmark the hot kernels: numba @njit loops vs the pure-numpy fallback.

Usage:
    python benchmarks/bench_kernels.py [--size 256] [--repeat 5]

Both implementations are imported directly, so a single run compares them
regardless of the MIQABENCH_NO_NUMBA setting.  The full-operator sweep at
the end uses whichever backend is active for the process.
"""

import argparse
import time

import numpy as np

from miqabench import hashing, kernels
from miqabench.core import DISTORTION_TYPES
from miqabench.degradation import apply_distortion


def _timeit(fn, repeat):
    fn()  # warm-up (and jit compile)
    samples = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return min(samples)


def bench_conv(size, repeat):
    rng = np.random.default_rng(0)
    radius = 9
    pts = [
        (dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if dy * dy + dx * dx <= radius * radius
    ]
    dy = np.array([p[0] + radius for p in pts], np.int64)
    dx = np.array([p[1] + radius for p in pts], np.int64)
    w = np.full(len(pts), 1.0 / len(pts))
    padded = np.ascontiguousarray(rng.random((size + 2 * radius, size + 2 * radius, 3)))

    if kernels.NUMBA_ACTIVE:
        t_jit = _timeit(lambda: kernels.conv2d_taps(padded, dy, dx, w, size, size), repeat)
    else:
        t_jit = None
    t_np = _timeit(lambda: kernels._conv2d_taps_numpy(padded, dy, dx, w, size, size), repeat)
    return "disk conv (r=9)", t_jit, t_np


def bench_glass(size, repeat):
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, (size, size, 3)).astype(np.uint8)
    iters, delta = 3, 3
    counters = np.arange(iters * size * size, dtype=np.uint64)
    bits = hashing.splitmix64_array(counters, 7)
    span = np.uint64(2 * delta + 1)
    dy = ((bits & np.uint64(0xFFFFFFFF)) % span).astype(np.int64).reshape(iters, size, size) - delta
    dx = ((bits >> np.uint64(32)) % span).astype(np.int64).reshape(iters, size, size) - delta

    if kernels.NUMBA_ACTIVE:
        t_jit = _timeit(lambda: kernels.glass_shuffle(img.copy(), dy, dx, delta), repeat)
    else:
        t_jit = None
    t_np = _timeit(lambda: kernels._glass_shuffle_numpy(img.copy(), dy, dx, delta), repeat)
    return "glass shuffle (3 it)", t_jit, t_np


def bench_ssim_moments(size, repeat):
    rng = np.random.default_rng(2)
    x = np.ascontiguousarray(rng.random((size, size)) * 255)
    y = np.ascontiguousarray(rng.random((size, size)) * 255)
    radius = 5
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(ax**2) / (2 * 1.5 * 1.5))
    w = np.outer(g, g).reshape(-1)
    w /= w.sum()

    if kernels.NUMBA_ACTIVE:
        t_jit = _timeit(lambda: kernels.window_moments(x, y, w, radius), repeat)
    else:
        t_jit = None
    t_np = _timeit(lambda: kernels._window_moments_numpy(x, y, w, radius), repeat)
    return "ssim moments (11x11)", t_jit, t_np


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--size", type=int, default=256)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    print(f"backend active for operators: {kernels.backend_name()}")
    print(f"{'kernel':24s} {'numba':>10s} {'numpy':>10s} {'speedup':>9s}")
    for bench in (bench_conv, bench_glass, bench_ssim_moments):
        name, t_jit, t_np = bench(args.size, args.repeat)
        jit_ms = "-" if t_jit is None else f"{t_jit * 1e3:8.2f}ms"
        ratio = "-" if t_jit is None else f"{t_np / t_jit:8.1f}x"
        print(f"{name:24s} {jit_ms:>10s} {t_np * 1e3:8.2f}ms {ratio:>9s}")

    rng = np.random.default_rng(3)
    img = rng.integers(0, 256, (args.size, args.size, 3)).astype(np.uint8)
    print(f"\nfull operator sweep at level 3 ({args.size}x{args.size}, active backend):")
    for dist_type in DISTORTION_TYPES:
        t = _timeit(lambda: apply_distortion(img, dist_type, 3, seed=0), args.repeat)
        print(f"  {dist_type:15s} {t * 1e3:8.2f}ms")


if __name__ == "__main__":
    main()
