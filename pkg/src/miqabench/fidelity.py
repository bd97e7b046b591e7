"""Full-reference fidelity metrics used to characterize the degraded corpus."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ValidationError, validate_image
from .kernels import window_moments

PSNR_CAP = 100.0

SSIM_WINDOW_RADIUS = 5  # 11x11 window
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 255.0

# Rec. 601 luma coefficients
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass(frozen=True)
class FidelityScore:
    psnr: float
    ssim: float


def _check_pair(reference: np.ndarray, test: np.ndarray):
    validate_image(reference, "reference")
    validate_image(test, "test")
    if reference.shape != test.shape:
        raise ValidationError(
            f"dimension mismatch: reference {reference.shape} vs test {test.shape}"
        )


def psnr(reference: np.ndarray, test: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over all channels, capped at 100
    (identical images have zero MSE)."""
    _check_pair(reference, test)
    diff = reference.astype(np.float64) - test.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(255.0**2 / mse), PSNR_CAP)


def _gaussian_window(radius: int, sigma: float) -> np.ndarray:
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    k1 = np.exp(-(ax**2) / (2.0 * sigma * sigma))
    k2 = np.outer(k1, k1)
    return (k2 / k2.sum()).reshape(-1)


def luma(img: np.ndarray) -> np.ndarray:
    return img.astype(np.float64) @ _LUMA


def ssim(reference: np.ndarray, test: np.ndarray) -> float:
    """Mean local SSIM over an 11x11 Gaussian window (sigma 1.5) on Rec. 601
    luma, with the standard stabilizers K1=0.01, K2=0.03 at L=255.  Windows
    are evaluated where they fit entirely inside the image."""
    _check_pair(reference, test)
    h, w = reference.shape[0], reference.shape[1]
    side = 2 * SSIM_WINDOW_RADIUS + 1
    if min(h, w) < side:
        raise ValidationError(f"image {w}x{h} smaller than the {side}x{side} window")

    x = luma(reference)
    y = luma(test)
    weights = _gaussian_window(SSIM_WINDOW_RADIUS, SSIM_SIGMA)
    mx, my, mxx, myy, mxy = window_moments(
        np.ascontiguousarray(x), np.ascontiguousarray(y), weights, SSIM_WINDOW_RADIUS
    )

    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    var_x = mxx - mx * mx
    var_y = myy - my * my
    cov = mxy - mx * my
    num = (2.0 * mx * my + c1) * (2.0 * cov + c2)
    den = (mx * mx + my * my + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def fidelity(reference: np.ndarray, test: np.ndarray) -> FidelityScore:
    return FidelityScore(psnr=psnr(reference, test), ssim=ssim(reference, test))
