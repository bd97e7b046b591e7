"""Domain types shared across the pipeline.

Images are numpy arrays: (H, W, 3) uint8 sRGB for pictures and (H, W)
uint8 with values in {0, 255} for region-of-interest masks.  Everything
else is a frozen dataclass, immutable after construction and safe to
share across threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .rle import RunLengthMask


class ValidationError(ValueError):
    """Raised when a value violates a documented invariant."""


class TaskKind(str, enum.Enum):
    CLASSIFICATION = "classification"
    DETECTION = "detection"
    SEGMENTATION = "segmentation"


DISTORTION_TYPES = (
    "contrast",
    "pixelate",
    "jpeg",
    "motion_blur",
    "defocus_blur",
    "glass_blur",
    "fog",
    "snow",
    "darkness",
    "gaussian_noise",
)

# Severity-pair grid: 5 uniform cells, 10 ROI-dominated (roi > bg),
# 10 background-dominated (roi < bg), enumerated in report order.
UNIFORM_CELLS = ((1, 1), (2, 2), (3, 3), (4, 4), (5, 5))
ROI_DOMINATED_CELLS = (
    (2, 1), (3, 1), (4, 1), (5, 1), (3, 2),
    (4, 2), (5, 2), (4, 3), (5, 3), (5, 4),
)
BG_DOMINATED_CELLS = (
    (1, 2), (1, 3), (1, 4), (1, 5), (2, 3),
    (2, 4), (2, 5), (3, 4), (3, 5), (4, 5),
)
FULL_GRID_CELLS = UNIFORM_CELLS + ROI_DOMINATED_CELLS + BG_DOMINATED_CELLS

REGION_UNIFORM = "UD"
REGION_ROI_DOMINATED = "ROI-DD"
REGION_BG_DOMINATED = "BG-DD"
REGION_MODES = (REGION_UNIFORM, REGION_ROI_DOMINATED, REGION_BG_DOMINATED)


def validate_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError(f"{name}: expected (H, W, 3) array, got {getattr(img, 'shape', None)}")
    if img.dtype != np.uint8:
        raise ValidationError(f"{name}: expected uint8 pixels, got {img.dtype}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValidationError(f"{name}: empty raster {img.shape}")
    return img


def validate_mask(mask: np.ndarray, name: str = "mask") -> np.ndarray:
    if not isinstance(mask, np.ndarray) or mask.ndim != 2:
        raise ValidationError(f"{name}: expected (H, W) array, got {getattr(mask, 'shape', None)}")
    if mask.dtype != np.uint8:
        raise ValidationError(f"{name}: expected uint8, got {mask.dtype}")
    bad = ~np.isin(mask, (0, 255))
    if bad.any():
        raise ValidationError(f"{name}: mask bytes must be 0 or 255")
    return mask


@dataclass(frozen=True, order=True)
class DistortionSpec:
    """One cell of the degradation grid: a distortion and how strongly it
    hits the region of interest versus the background."""

    distortion_type: str
    roi_level: int
    bg_level: int

    def __post_init__(self):
        if self.distortion_type not in DISTORTION_TYPES:
            raise ValidationError(f"unknown distortion type {self.distortion_type!r}")
        for lvl, which in ((self.roi_level, "roi_level"), (self.bg_level, "bg_level")):
            if not isinstance(lvl, int) or not 1 <= lvl <= 5:
                raise ValidationError(f"{which} must be an integer in 1..5, got {lvl!r}")

    @property
    def region_mode(self) -> str:
        if self.roi_level == self.bg_level:
            return REGION_UNIFORM
        if self.roi_level > self.bg_level:
            return REGION_ROI_DOMINATED
        return REGION_BG_DOMINATED

    def to_dict(self) -> dict:
        return {
            "distortion_type": self.distortion_type,
            "roi_level": self.roi_level,
            "bg_level": self.bg_level,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DistortionSpec":
        return cls(d["distortion_type"], int(d["roi_level"]), int(d["bg_level"]))


def _check_confidence(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name}: confidence {value} outside [0, 1]")
    return value


@dataclass(frozen=True)
class ClassPrediction:
    label: Union[int, str]
    confidence: float

    def __post_init__(self):
        _check_confidence(self.confidence, "class prediction")

    kind = "classification"


@dataclass(frozen=True)
class BoxItem:
    """A bounding box [x_min, y_min, width, height] in float pixels with a
    category; confidence is None for reference annotations."""

    bbox: tuple
    category: Union[int, str]
    confidence: Union[float, None] = None

    def __post_init__(self):
        if len(self.bbox) != 4:
            raise ValidationError(f"bbox must have 4 entries, got {self.bbox!r}")
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise ValidationError(f"bbox width/height must be positive, got {self.bbox}")
        if self.confidence is not None:
            _check_confidence(self.confidence, "box item")


@dataclass(frozen=True)
class MaskItem:
    mask: RunLengthMask
    category: Union[int, str]
    confidence: Union[float, None] = None

    def __post_init__(self):
        if self.confidence is not None:
            _check_confidence(self.confidence, "mask item")


@dataclass(frozen=True)
class DetectionSet:
    items: tuple

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        for it in self.items:
            if not isinstance(it, BoxItem):
                raise ValidationError("detection payload items must be BoxItem")

    kind = "detection"


@dataclass(frozen=True)
class InstanceSet:
    items: tuple

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        for it in self.items:
            if not isinstance(it, MaskItem):
                raise ValidationError("segmentation payload items must be MaskItem")

    kind = "segmentation"


Payload = Union[ClassPrediction, DetectionSet, InstanceSet]

PAYLOAD_KIND_FOR_TASK = {
    TaskKind.CLASSIFICATION: "classification",
    TaskKind.DETECTION: "detection",
    TaskKind.SEGMENTATION: "segmentation",
}


@dataclass(frozen=True)
class PredictionRecord:
    """One black-box model output for a (model, image, grid cell) triple;
    distortion None means the prediction was made on the pristine image."""

    model_id: str
    image_id: str
    distortion: Union[DistortionSpec, None]
    payload: Payload


@dataclass(frozen=True)
class ModelRecord:
    model_id: str
    task: TaskKind
    benchmark_perf: float

    def __post_init__(self):
        object.__setattr__(self, "task", TaskKind(self.task))
        object.__setattr__(self, "benchmark_perf", float(self.benchmark_perf))
        if not self.benchmark_perf > 0:
            raise ValidationError(
                f"model {self.model_id!r}: benchmark_perf must be > 0, got {self.benchmark_perf}"
            )


@dataclass(frozen=True)
class QualityLabel:
    consistency: float
    accuracy: float
    composite: float

    def __post_init__(self):
        for name in ("consistency", "accuracy", "composite"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"label {name}={v} outside [0, 1]")
        lo = min(self.consistency, self.accuracy)
        hi = max(self.consistency, self.accuracy)
        if not lo <= self.composite <= hi:
            raise ValidationError(
                f"composite {self.composite} outside [{lo}, {hi}]"
            )


@dataclass(frozen=True)
class ImageEntry:
    image_id: str
    image_path: str
    mask_path: str
    ground_truth: object  # category id, or tuple of BoxItem / MaskItem


@dataclass(frozen=True)
class DatasetManifest:
    task: TaskKind
    images: tuple
    grid: tuple = field(default=FULL_GRID_CELLS)

    def __post_init__(self):
        object.__setattr__(self, "task", TaskKind(self.task))
        object.__setattr__(self, "images", tuple(self.images))
        cells = []
        for cell in self.grid:
            a, b = int(cell[0]), int(cell[1])
            if not (1 <= a <= 5 and 1 <= b <= 5):
                raise ValidationError(f"grid cell {cell!r} outside 1..5")
            cells.append((a, b))
        if len(set(cells)) != len(cells):
            raise ValidationError("grid cells must be unique")
        object.__setattr__(self, "grid", tuple(cells))

    def image_ids(self) -> tuple:
        return tuple(e.image_id for e in self.images)

    def specs(self) -> tuple:
        """All distortion specs: the severity grid crossed with every type."""
        return tuple(
            DistortionSpec(t, a, b)
            for t in DISTORTION_TYPES
            for (a, b) in self.grid
        )


def normalize_weights(models) -> dict:
    """Proportionally normalize benchmark performance into model weights
    that sum to 1."""
    models = list(models)
    if not models:
        raise ValidationError("cannot normalize weights for an empty model list")
    tasks = {m.task for m in models}
    if len(tasks) != 1:
        raise ValidationError(f"models span multiple tasks: {sorted(t.value for t in tasks)}")
    ids = [m.model_id for m in models]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValidationError(f"duplicate model ids: {dupes}")
    for m in models:
        if not m.benchmark_perf > 0:
            raise ValidationError(f"model {m.model_id!r} has non-positive performance")
    # fsum is exactly rounded, so the result is independent of model order
    total = math.fsum(m.benchmark_perf for m in models)
    return {m.model_id: m.benchmark_perf / total for m in models}
