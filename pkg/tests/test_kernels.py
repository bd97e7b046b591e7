"""The numba and numpy kernel paths must agree bit-for-bit."""

import numpy as np
import pytest

from miqabench import kernels


def _random_taps(rng, n):
    dy = rng.integers(0, 5, n).astype(np.int64)
    dx = rng.integers(0, 5, n).astype(np.int64)
    w = rng.normal(size=n)
    return dy, dx, w


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_conv2d_paths_bit_identical(seed):
    rng = np.random.default_rng(seed)
    padded = np.ascontiguousarray(rng.random((20, 22, 3)))
    dy, dx, w = _random_taps(rng, 9)
    out_active = kernels.conv2d_taps(padded, dy, dx, w, 16, 18)
    out_numpy = kernels._conv2d_taps_numpy(padded, dy, dx, w, 16, 18)
    out_loop = kernels._conv2d_taps_loop(padded, dy, dx, w, 16, 18)
    assert np.array_equal(out_active, out_numpy)
    assert np.array_equal(out_numpy, out_loop)


@pytest.mark.parametrize("seed", [0, 1])
def test_glass_shuffle_paths_bit_identical(seed):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, (17, 19, 3)).astype(np.uint8)
    iters, margin = 2, 2
    dy = rng.integers(-margin, margin + 1, (iters, 17, 19)).astype(np.int64)
    dx = rng.integers(-margin, margin + 1, (iters, 17, 19)).astype(np.int64)

    a = np.ascontiguousarray(img.copy())
    b = img.copy()
    c = img.copy()
    kernels.glass_shuffle(a, dy, dx, margin)
    kernels._glass_shuffle_numpy(b, dy, dx, margin)
    kernels._glass_shuffle_loop(c, dy, dx, margin)
    assert np.array_equal(a, b)
    assert np.array_equal(b, c)
    # swaps permute pixels, so the multiset of values is preserved
    assert np.array_equal(np.sort(a.reshape(-1, 3), axis=0), np.sort(img.reshape(-1, 3), axis=0))


@pytest.mark.parametrize("seed", [0, 3])
def test_window_moments_paths_bit_identical(seed):
    rng = np.random.default_rng(seed)
    x = np.ascontiguousarray(rng.random((24, 21)) * 255)
    y = np.ascontiguousarray(rng.random((24, 21)) * 255)
    radius = 3
    w = rng.random((2 * radius + 1) ** 2)
    w /= w.sum()
    active = kernels.window_moments(x, y, w, radius)
    vec = kernels._window_moments_numpy(x, y, w, radius)
    loop = kernels._window_moments_loop(x, y, w, radius)
    for a, b, c in zip(active, vec, loop):
        assert np.array_equal(a, b)
        assert np.array_equal(b, c)


def test_backend_reports_a_known_name():
    assert kernels.backend_name() in ("numba", "numpy")
