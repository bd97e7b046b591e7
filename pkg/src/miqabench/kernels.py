"""Hot per-pixel kernels, numba-compiled with a pure-numpy fallback.

Each kernel has two implementations: a scalar-loop version that numba
compiles with @njit, and a vectorized numpy version.  The numpy path is
used when numba is unavailable or disabled with MIQABENCH_NO_NUMBA=1.

The two paths are written to perform the identical sequence of IEEE-754
operations per output element (same multiplications, same addition
order), so they produce bit-identical results.  Tests assert exact
equality; keep fastmath OFF so the compiler cannot reassociate or fuse
the arithmetic.
"""

from __future__ import annotations

import os

import numpy as np


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


NUMBA_DISABLED = _env_flag("MIQABENCH_NO_NUMBA")

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled via MIQABENCH_NO_NUMBA")
    from numba import njit as _njit

    NUMBA_ACTIVE = True
except ImportError:
    NUMBA_ACTIVE = False


# ---------------------------------------------------------------------------
# Tap-list 2D convolution (valid mode; caller pads).
# Taps are (dy, dx, weight) triples; zero-weight taps should be omitted by
# the caller, which is what makes sparse kernels (lines, disks) cheap.
# ---------------------------------------------------------------------------

def _conv2d_taps_numpy(padded, dy, dx, weights, out_h, out_w):
    out = np.zeros((out_h, out_w, padded.shape[2]), np.float64)
    for t in range(dy.shape[0]):
        out += weights[t] * padded[dy[t]:dy[t] + out_h, dx[t]:dx[t] + out_w]
    return out


def _conv2d_taps_loop(padded, dy, dx, weights, out_h, out_w):
    channels = padded.shape[2]
    ntaps = dy.shape[0]
    out = np.zeros((out_h, out_w, channels), np.float64)
    for i in range(out_h):
        for j in range(out_w):
            for k in range(channels):
                acc = 0.0
                for t in range(ntaps):
                    acc += weights[t] * padded[i + dy[t], j + dx[t], k]
                out[i, j, k] = acc
    return out


# ---------------------------------------------------------------------------
# Sequential local pixel swaps (glass distortion).  Swaps chain, so the
# scan order (row-major, one pass per iteration) is part of the contract.
# Displacements are precomputed counter-based draws, making the result a
# pure function of the inputs.
# ---------------------------------------------------------------------------

def _glass_shuffle_numpy(img, disp_y, disp_x, margin):
    h, w = img.shape[0], img.shape[1]
    iters = disp_y.shape[0]
    for it in range(iters):
        dyi = disp_y[it]
        dxi = disp_x[it]
        for i in range(margin, h - margin):
            for j in range(margin, w - margin):
                i2 = i + dyi[i, j]
                j2 = j + dxi[i, j]
                tmp = img[i, j].copy()
                img[i, j] = img[i2, j2]
                img[i2, j2] = tmp
    return img


def _glass_shuffle_loop(img, disp_y, disp_x, margin):
    h, w = img.shape[0], img.shape[1]
    channels = img.shape[2]
    iters = disp_y.shape[0]
    for it in range(iters):
        for i in range(margin, h - margin):
            for j in range(margin, w - margin):
                i2 = i + disp_y[it, i, j]
                j2 = j + disp_x[it, i, j]
                for k in range(channels):
                    tmp = img[i, j, k]
                    img[i, j, k] = img[i2, j2, k]
                    img[i2, j2, k] = tmp
    return img


# ---------------------------------------------------------------------------
# Weighted window moments for structural-similarity maps: for every valid
# window center, the weighted sums of x, y, x^2, y^2 and x*y.  The window
# is square with side 2*radius+1 and weights enumerated row-major.
# ---------------------------------------------------------------------------

def _window_moments_numpy(x, y, weights, radius):
    h, w = x.shape
    side = 2 * radius + 1
    oh, ow = h - side + 1, w - side + 1
    xx = x * x
    yy = y * y
    xy = x * y
    mx = np.zeros((oh, ow), np.float64)
    my = np.zeros((oh, ow), np.float64)
    mxx = np.zeros((oh, ow), np.float64)
    myy = np.zeros((oh, ow), np.float64)
    mxy = np.zeros((oh, ow), np.float64)
    t = 0
    for a in range(side):
        for b in range(side):
            wt = weights[t]
            t += 1
            mx += wt * x[a:a + oh, b:b + ow]
            my += wt * y[a:a + oh, b:b + ow]
            mxx += wt * xx[a:a + oh, b:b + ow]
            myy += wt * yy[a:a + oh, b:b + ow]
            mxy += wt * xy[a:a + oh, b:b + ow]
    return mx, my, mxx, myy, mxy


def _window_moments_loop(x, y, weights, radius):
    h, w = x.shape
    side = 2 * radius + 1
    oh, ow = h - side + 1, w - side + 1
    mx = np.zeros((oh, ow), np.float64)
    my = np.zeros((oh, ow), np.float64)
    mxx = np.zeros((oh, ow), np.float64)
    myy = np.zeros((oh, ow), np.float64)
    mxy = np.zeros((oh, ow), np.float64)
    for i in range(oh):
        for j in range(ow):
            sx = 0.0
            sy = 0.0
            sxx = 0.0
            syy = 0.0
            sxy = 0.0
            t = 0
            for a in range(side):
                for b in range(side):
                    wt = weights[t]
                    t += 1
                    xv = x[i + a, j + b]
                    yv = y[i + a, j + b]
                    sx += wt * xv
                    sy += wt * yv
                    sxx += wt * (xv * xv)
                    syy += wt * (yv * yv)
                    sxy += wt * (xv * yv)
            mx[i, j] = sx
            my[i, j] = sy
            mxx[i, j] = sxx
            myy[i, j] = syy
            mxy[i, j] = sxy
    return mx, my, mxx, myy, mxy


if NUMBA_ACTIVE:
    conv2d_taps = _njit(cache=True, nogil=True)(_conv2d_taps_loop)
    glass_shuffle = _njit(cache=True, nogil=True)(_glass_shuffle_loop)
    window_moments = _njit(cache=True, nogil=True)(_window_moments_loop)
else:
    conv2d_taps = _conv2d_taps_numpy
    glass_shuffle = _glass_shuffle_numpy
    window_moments = _window_moments_numpy


def backend_name() -> str:
    return "numba" if NUMBA_ACTIVE else "numpy"
