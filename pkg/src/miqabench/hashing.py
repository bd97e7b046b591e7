"""Deterministic counter-based hashing for all stochastic operations.

Every random quantity in this package is a pure function of a 64-bit key
and a counter, so results never depend on call order, thread scheduling,
or global RNG state.  The mixing function is SplitMix64 (Steele et al.,
"Fast splittable pseudorandom number generators"); string/byte keys are
folded with 64-bit FNV-1a before mixing.  Both are published constants,
so an independent implementation can reproduce every draw.
"""

from __future__ import annotations

import numpy as np

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK64 = 0xFFFFFFFFFFFFFFFF

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_SEP = b"\x1f"


def splitmix64(value: int) -> int:
    """Finalize a 64-bit state into a well-mixed 64-bit output."""
    z = (value + _GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def splitmix64_array(counters: np.ndarray, key: int) -> np.ndarray:
    """Vectorized SplitMix64 stream: element i is splitmix64(key + i*GAMMA)."""
    z = (np.uint64(key) + (counters.astype(np.uint64) + np.uint64(1)) * np.uint64(_GAMMA))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def _fold_parts(parts) -> int:
    payload = _SEP.join(str(p).encode("utf-8") for p in parts)
    return fnv1a64(payload)


def derive_key(*parts) -> int:
    """Derive a 64-bit stream key from arbitrary labeled parts.

    Parts are stringified, joined with the 0x1f separator, FNV-1a folded,
    and SplitMix64 finalized.
    """
    return splitmix64(_fold_parts(parts))


def hash01(*parts) -> float:
    """Map labeled parts to a deterministic float in [0, 1)."""
    return derive_key(*parts) / 2.0**64


def uniform01_array(counters: np.ndarray, key: int) -> np.ndarray:
    """Uniform floats in [0, 1) for the given counters, 53-bit resolution."""
    bits = splitmix64_array(counters, key)
    return (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53


def standard_normals(n: int, key: int) -> np.ndarray:
    """n standard-normal draws via Box-Muller on counter-based uniforms.

    Draw i consumes counters 2i and 2i+1, so the value at each index is a
    pure function of (key, index).
    """
    counters = np.arange(2 * n, dtype=np.uint64)
    bits = splitmix64_array(counters, key)
    # u1 in (0, 1] so log() is finite; u2 in [0, 1)
    u1 = ((bits[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u2 = (bits[1::2] >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def int_range_array(counters: np.ndarray, key: int, low: int, high: int) -> np.ndarray:
    """Deterministic integers in [low, high] (inclusive) per counter."""
    span = np.uint64(high - low + 1)
    bits = splitmix64_array(counters, key)
    return (bits % span).astype(np.int64) + low
