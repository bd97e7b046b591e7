"""Distortion operators, the region compositor, and grid generation.

Ten operators at five severities each.  Severity tables follow the usual
corruption-benchmark convention: every parameter sequence is strictly
stronger with level (noise sigma and fog density rise, contrast and
brightness factors fall, and so on).  Stochastic operators draw from
counter-based streams keyed on the caller's seed, so outputs are
reproducible regardless of scheduling; contrast, darkness, pixelate,
jpeg, and defocus blur ignore the seed entirely.
"""

from __future__ import annotations

import hashlib
import io as _io
import math

import numpy as np
from PIL import Image

from . import hashing
from .core import (
    DISTORTION_TYPES,
    FULL_GRID_CELLS,
    DistortionSpec,
    ValidationError,
    validate_image,
    validate_mask,
)
from .kernels import conv2d_taps, glass_shuffle

# Per-operator severity tables, level 1..5.
SEVERITY_PARAMS = {
    "gaussian_noise": {"sigma_frac": (0.04, 0.08, 0.12, 0.18, 0.26)},
    "contrast": {"factor": (0.75, 0.60, 0.45, 0.30, 0.15)},
    "darkness": {"factor": (0.70, 0.55, 0.40, 0.30, 0.20)},
    "pixelate": {"scale": (0.6, 0.5, 0.4, 0.3, 0.25)},
    "jpeg": {"quality": (25, 18, 15, 10, 7)},
    "motion_blur": {"length": (9, 13, 17, 21, 25)},
    "defocus_blur": {"radius": (2, 3, 5, 7, 9)},
    "glass_blur": {
        "sigma": (0.7, 0.9, 1.1, 1.3, 1.5),
        "iterations": (1, 1, 2, 2, 3),
        "delta": (1, 2, 2, 3, 3),
    },
    "fog": {"decay": (2.0, 1.7, 1.5, 1.2, 1.0), "blend": (0.15, 0.25, 0.35, 0.45, 0.60)},
    "snow": {
        "density": (0.03, 0.05, 0.07, 0.10, 0.14),
        "streak_len": (7, 9, 11, 13, 15),
        "lift": (0.03, 0.05, 0.07, 0.10, 0.14),
    },
}

STOCHASTIC_TYPES = frozenset({"gaussian_noise", "motion_blur", "glass_blur", "fog", "snow"})
DETERMINISTIC_TYPES = frozenset(DISTORTION_TYPES) - STOCHASTIC_TYPES


def _check_level(level: int) -> int:
    if not isinstance(level, int) or not 1 <= level <= 5:
        raise ValidationError(f"severity level must be an integer in 1..5, got {level!r}")
    return level


def _to_uint8(arr: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(arr), 0, 255).astype(np.uint8)


def _content_key(img: np.ndarray) -> str:
    return hashlib.sha256(img.tobytes()).hexdigest()


# ---------------------------------------------------------------------------
# Convolution helpers
# ---------------------------------------------------------------------------

def _convolve_taps(img: np.ndarray, taps) -> np.ndarray:
    """Reflect-padded convolution of a float64 (H, W, C) array with a sparse
    tap list [(dy, dx, weight), ...]."""
    dy = np.array([t[0] for t in taps], dtype=np.int64)
    dx = np.array([t[1] for t in taps], dtype=np.int64)
    w = np.array([t[2] for t in taps], dtype=np.float64)
    m = int(max(np.abs(dy).max(), np.abs(dx).max()))
    h, width = img.shape[0], img.shape[1]
    padded = np.pad(img, ((m, m), (m, m), (0, 0)), mode="reflect")
    return conv2d_taps(np.ascontiguousarray(padded), dy + m, dx + m, w, h, width)


def _gaussian_taps(sigma: float):
    radius = max(1, int(math.ceil(3.0 * sigma)))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    k1 = np.exp(-(ax**2) / (2.0 * sigma * sigma))
    k2 = np.outer(k1, k1)
    k2 /= k2.sum()
    return [
        (int(a), int(b), float(k2[a + radius, b + radius]))
        for a in range(-radius, radius + 1)
        for b in range(-radius, radius + 1)
    ]


def _line_taps(length: int, angle_deg: float):
    """Normalized linear kernel of the given pixel length and angle."""
    half = (length - 1) / 2.0
    rad = math.radians(angle_deg)
    cos_a, sin_a = math.cos(rad), math.sin(rad)
    hits = {}
    for t in np.linspace(-half, half, length):
        key = (int(round(t * sin_a)), int(round(t * cos_a)))
        hits[key] = hits.get(key, 0) + 1
    total = float(sum(hits.values()))
    return [(dy, dx, c / total) for (dy, dx), c in sorted(hits.items())]


def _disk_taps(radius: int):
    pts = [
        (dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if dy * dy + dx * dx <= radius * radius
    ]
    w = 1.0 / len(pts)
    return [(dy, dx, w) for dy, dx in pts]


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def _op_contrast(img, level, seed):
    factor = SEVERITY_PARAMS["contrast"]["factor"][level - 1]
    x = img.astype(np.float64)
    mean = x.reshape(-1, 3).mean(axis=0)
    return _to_uint8((x - mean) * factor + mean)


def _op_darkness(img, level, seed):
    factor = SEVERITY_PARAMS["darkness"]["factor"][level - 1]
    return _to_uint8(img.astype(np.float64) * factor)


def _op_pixelate(img, level, seed):
    scale = SEVERITY_PARAMS["pixelate"]["scale"][level - 1]
    h, w = img.shape[0], img.shape[1]
    small = (max(1, int(w * scale)), max(1, int(h * scale)))
    im = Image.fromarray(img)
    im = im.resize(small, Image.Resampling.BOX).resize((w, h), Image.Resampling.NEAREST)
    return np.asarray(im, dtype=np.uint8)


def _op_jpeg(img, level, seed):
    quality = SEVERITY_PARAMS["jpeg"]["quality"][level - 1]
    buf = _io.BytesIO()
    # baseline sequential, 4:2:0 chroma subsampling
    Image.fromarray(img).save(buf, format="JPEG", quality=quality, subsampling=2)
    buf.seek(0)
    with Image.open(buf) as decoded:
        return np.asarray(decoded.convert("RGB"), dtype=np.uint8)


def _op_gaussian_noise(img, level, seed):
    sigma = SEVERITY_PARAMS["gaussian_noise"]["sigma_frac"][level - 1] * 255.0
    z = hashing.standard_normals(img.size, key=seed).reshape(img.shape)
    return _to_uint8(img.astype(np.float64) + sigma * z)


def _motion_angle(img, seed) -> float:
    key = hashing.derive_key(seed, "motion_angle", _content_key(img))
    u = hashing.uniform01_array(np.arange(1, dtype=np.uint64), key)[0]
    return -45.0 + 90.0 * u


def _op_motion_blur(img, level, seed):
    length = SEVERITY_PARAMS["motion_blur"]["length"][level - 1]
    taps = _line_taps(length, _motion_angle(img, seed))
    return _to_uint8(_convolve_taps(img.astype(np.float64), taps))


def _op_defocus_blur(img, level, seed):
    radius = SEVERITY_PARAMS["defocus_blur"]["radius"][level - 1]
    return _to_uint8(_convolve_taps(img.astype(np.float64), _disk_taps(radius)))


def _op_glass_blur(img, level, seed):
    params = SEVERITY_PARAMS["glass_blur"]
    sigma = params["sigma"][level - 1]
    iters = params["iterations"][level - 1]
    delta = params["delta"][level - 1]
    taps = _gaussian_taps(sigma)

    out = _to_uint8(_convolve_taps(img.astype(np.float64), taps))
    h, w = out.shape[0], out.shape[1]
    if h > 2 * delta and w > 2 * delta:
        key = hashing.derive_key(seed, "glass")
        counters = np.arange(iters * h * w, dtype=np.uint64)
        bits = hashing.splitmix64_array(counters, key)
        span = np.uint64(2 * delta + 1)
        dy = ((bits & np.uint64(0xFFFFFFFF)) % span).astype(np.int64) - delta
        dx = ((bits >> np.uint64(32)) % span).astype(np.int64) - delta
        out = np.ascontiguousarray(out)
        glass_shuffle(out, dy.reshape(iters, h, w), dx.reshape(iters, h, w), delta)
    return _to_uint8(_convolve_taps(out.astype(np.float64), taps))


def plasma_field(size: int, decay: float, rng: np.random.Generator) -> np.ndarray:
    """Diamond-square height field on a power-of-two grid, normalized to
    [0, 1].  `decay` divides the displacement amplitude at every halving of
    the step, so smaller values keep more high-frequency roughness."""
    if size & (size - 1) != 0:
        raise ValueError(f"plasma size must be a power of two, got {size}")
    field = np.zeros((size, size), dtype=np.float64)
    step = size
    amp = 1.0
    while step >= 2:
        half = step // 2
        # square step: centers from the four surrounding corners
        corners = field[0:size:step, 0:size:step]
        acc = corners + np.roll(corners, -1, axis=0)
        acc = acc + np.roll(acc, -1, axis=1)
        field[half::step, half::step] = acc / 4.0 + amp * rng.uniform(
            -1.0, 1.0, acc.shape
        )
        # diamond step: edge midpoints from their four neighbours (wrapped)
        centers = field[half::step, half::step]
        corners = field[0:size:step, 0:size:step]
        ld = centers + np.roll(centers, 1, axis=0)
        lu = corners + np.roll(corners, -1, axis=1)
        field[0:size:step, half::step] = (ld + lu) / 4.0 + amp * rng.uniform(
            -1.0, 1.0, ld.shape
        )
        td = centers + np.roll(centers, 1, axis=1)
        tu = corners + np.roll(corners, -1, axis=0)
        field[half::step, 0:size:step] = (td + tu) / 4.0 + amp * rng.uniform(
            -1.0, 1.0, td.shape
        )
        step = half
        amp /= decay
    lo, hi = field.min(), field.max()
    if hi > lo:
        field = (field - lo) / (hi - lo)
    return field


def _op_fog(img, level, seed):
    params = SEVERITY_PARAMS["fog"]
    decay = params["decay"][level - 1]
    blend = params["blend"][level - 1]
    h, w = img.shape[0], img.shape[1]
    size = 1 << max(2, int(math.ceil(math.log2(max(h, w)))))
    rng = np.random.default_rng(hashing.derive_key(seed, "fog"))
    field = plasma_field(size, decay, rng)[:h, :w]
    x = img.astype(np.float64)
    return _to_uint8((1.0 - blend) * x + blend * 255.0 * field[..., None])


def _op_snow(img, level, seed):
    params = SEVERITY_PARAMS["snow"]
    density = params["density"][level - 1]
    streak_len = params["streak_len"][level - 1]
    lift = params["lift"][level - 1]
    h, w = img.shape[0], img.shape[1]

    field = hashing.standard_normals(h * w, key=hashing.derive_key(seed, "snow")).reshape(h, w)
    threshold = np.quantile(field, 1.0 - density)
    top = field.max()
    particles = np.clip((field - threshold) / max(top - threshold, 1e-12), 0.0, 1.0)

    angle_key = hashing.derive_key(seed, "snow_angle")
    u = hashing.uniform01_array(np.arange(1, dtype=np.uint64), angle_key)[0]
    angle = -60.0 + 30.0 * u  # descending streaks
    streaks = _convolve_taps(particles[..., None], _line_taps(streak_len, angle))[..., 0]
    peak = streaks.max()
    if peak > 0:
        streaks = streaks / peak

    x = img.astype(np.float64)
    snowed = np.maximum(x, 255.0 * streaks[..., None])
    return _to_uint8((1.0 - lift) * snowed + lift * 255.0)


_OPERATORS = {
    "contrast": _op_contrast,
    "pixelate": _op_pixelate,
    "jpeg": _op_jpeg,
    "motion_blur": _op_motion_blur,
    "defocus_blur": _op_defocus_blur,
    "glass_blur": _op_glass_blur,
    "fog": _op_fog,
    "snow": _op_snow,
    "darkness": _op_darkness,
    "gaussian_noise": _op_gaussian_noise,
}


def apply_distortion(img: np.ndarray, distortion_type: str, level: int, seed: int = 0) -> np.ndarray:
    """Apply one distortion at the given severity.  Output has the input's
    dimensions and is a deterministic function of (pixels, type, level, seed)."""
    validate_image(img)
    _check_level(level)
    if distortion_type not in _OPERATORS:
        raise ValidationError(f"unknown distortion type {distortion_type!r}")
    out = _OPERATORS[distortion_type](img, level, int(seed))
    return validate_image(out, f"{distortion_type} output")


def composite_regions(roi_variant: np.ndarray, bg_variant: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Hard binary compositing: ROI pixels from roi_variant, the rest from
    bg_variant.  No blending at the boundary."""
    validate_image(roi_variant, "roi_variant")
    validate_image(bg_variant, "bg_variant")
    validate_mask(mask)
    if roi_variant.shape != bg_variant.shape or roi_variant.shape[:2] != mask.shape:
        raise ValidationError(
            f"dimension mismatch: roi {roi_variant.shape}, bg {bg_variant.shape}, mask {mask.shape}"
        )
    return np.where((mask == 255)[..., None], roi_variant, bg_variant)


def generate_grid(img: np.ndarray, mask: np.ndarray, distortion_type: str, seed: int = 0):
    """All 25 grid cells for one distortion type.

    Uniform cells (l, l) are the whole-image distortion at level l with no
    compositing.  Mixed cells (a, b) composite the level-a and level-b
    variants through the mask; both variants come from the same seed so
    shared stochastic structure lines up at the mask boundary.
    """
    validate_image(img)
    validate_mask(mask)
    if img.shape[:2] != mask.shape:
        raise ValidationError(f"mask {mask.shape} does not match image {img.shape[:2]}")
    variants = {
        level: apply_distortion(img, distortion_type, level, seed) for level in range(1, 6)
    }
    cells = []
    for roi_level, bg_level in FULL_GRID_CELLS:
        spec = DistortionSpec(distortion_type, roi_level, bg_level)
        if roi_level == bg_level:
            out = variants[roi_level]
        else:
            out = composite_regions(variants[roi_level], variants[bg_level], mask)
        cells.append((spec, out))
    return cells
