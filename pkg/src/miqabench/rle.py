"""Run-length codec for binary masks.

Counts alternate runs of 0s and 1s over the row-major flattened H x W
grid, starting with the zero-run (which may be 0).  Encoding is
canonical: no zero-length interior runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RunLengthMask:
    width: int
    height: int
    counts: tuple

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if self.width < 1 or self.height < 1:
            raise ValueError(f"mask dimensions must be positive, got {self.width}x{self.height}")
        if any(c < 0 for c in self.counts):
            raise ValueError("run lengths must be non-negative")
        total = sum(self.counts)
        if total != self.width * self.height:
            raise ValueError(
                f"run lengths sum to {total}, expected {self.width * self.height} "
                f"for a {self.width}x{self.height} mask"
            )

    @property
    def area(self) -> int:
        return sum(self.counts[1::2])

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "counts": list(self.counts)}

    @classmethod
    def from_dict(cls, d: dict) -> "RunLengthMask":
        return cls(int(d["width"]), int(d["height"]), tuple(d["counts"]))


def rle_encode(mask: np.ndarray) -> RunLengthMask:
    """Encode a binary raster (any nonzero byte counts as set)."""
    if mask.ndim != 2:
        raise ValueError(f"expected a 2D raster, got shape {mask.shape}")
    h, w = mask.shape
    flat = (np.asarray(mask).reshape(-1) != 0).astype(np.int8)
    edges = np.flatnonzero(np.diff(flat)) + 1
    boundaries = np.concatenate(([0], edges, [flat.size]))
    runs = np.diff(boundaries)
    counts = runs.tolist()
    if flat[0] != 0:
        counts = [0] + counts
    return RunLengthMask(width=w, height=h, counts=tuple(counts))


def rle_decode(rle: RunLengthMask) -> np.ndarray:
    """Decode to a (H, W) uint8 raster of 0/1 values."""
    values = np.zeros(len(rle.counts), dtype=np.uint8)
    values[1::2] = 1
    flat = np.repeat(values, np.asarray(rle.counts, dtype=np.int64))
    return flat.reshape(rle.height, rle.width)
