"""Deterministic synthetic vision models with closed-form degradation
responses.

A synthetic model's reaction to any grid cell is a threshold test on a
published hash, not a random draw, so the exact quality labels the real
scoring pipeline should produce are computable in closed form.  The
oracle here derives labels directly from those threshold predicates and
the weighted-mean arithmetic, bypassing the prediction-file, matching,
and aggregation machinery entirely; `synth-check` asserts both routes
agree.

Synthetic detection/segmentation ground truths use one object per
category with side lengths of at least 22 px, so the small positional
shifts the models apply (at most 4 px) never drop a surviving object's
overlap below the default 0.5 matching threshold; the oracle verifies
this with exact rational arithmetic rather than assuming it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import hashing
from .core import (
    BoxItem,
    ClassPrediction,
    DatasetManifest,
    DetectionSet,
    DistortionSpec,
    ImageEntry,
    InstanceSet,
    MaskItem,
    ModelRecord,
    PredictionRecord,
    QualityLabel,
    TaskKind,
    ValidationError,
)
from .rle import RunLengthMask, rle_decode, rle_encode

N_CATEGORIES = 10
ROI_WEIGHT = 2.0 / 3.0
SYNTH_IMAGE_SIDE = 64
SYNTH_CONFIDENCE = 0.9

# (x, y, w, h, category): disjoint, >= 22 px sides, >= 4 px inside the far
# edge so a 4 px shift stays in bounds.
SYNTH_OBJECTS = (
    (4.0, 4.0, 22.0, 22.0, 0),
    (36.0, 4.0, 24.0, 22.0, 1),
    (4.0, 36.0, 22.0, 24.0, 2),
    (36.0, 36.0, 24.0, 24.0, 3),
)


@dataclass(frozen=True)
class SynthModel:
    """Synthetic model with a skill (pristine correctness rate) and a
    robustness scale (how much severity it takes to disturb it).
    Models sharing a behavior_key produce identical predictions."""

    model_id: str
    task: TaskKind
    skill: float
    robustness: float
    behavior_key: str = ""

    def __post_init__(self):
        object.__setattr__(self, "task", TaskKind(self.task))
        if not 0.0 < self.skill <= 1.0:
            raise ValidationError(f"skill must lie in (0, 1], got {self.skill}")
        if not 0.0 < self.robustness <= 2.0:
            raise ValidationError(f"robustness must lie in (0, 2], got {self.robustness}")
        if not self.behavior_key:
            object.__setattr__(self, "behavior_key", self.model_id)

    @property
    def benchmark_perf(self) -> float:
        return 100.0 * self.skill

    def record(self) -> ModelRecord:
        return ModelRecord(self.model_id, self.task, self.benchmark_perf)


def effective_severity(spec: DistortionSpec, w_roi: float = ROI_WEIGHT) -> float:
    """Collapse a grid cell to a scalar in (0, 1], weighting distortion of
    the region of interest more heavily than the background."""
    return (w_roi * spec.roi_level + (1.0 - w_roi) * spec.bg_level) / 5.0


def _other_label(base: int, *parts) -> int:
    offset = 1 + hashing.derive_key(*parts) % (N_CATEGORIES - 1)
    return (int(base) + offset) % N_CATEGORIES


def _pristine_class_label(model: SynthModel, image_id: str, gt_label: int) -> int:
    if hashing.hash01(model.behavior_key, image_id) < model.skill:
        return int(gt_label)
    return _other_label(gt_label, model.behavior_key, image_id, "wrong")


def _class_flip_threshold(model: SynthModel, image_id: str) -> float:
    return model.robustness * hashing.hash01(model.behavior_key, image_id, "flip")


def _item_drop_threshold(model: SynthModel, image_id: str, index: int) -> float:
    return model.robustness * hashing.hash01(model.behavior_key, image_id, index)


def _shift_px(spec) -> int:
    return int(math.floor(4.0 * effective_severity(spec)))


def _rect_mask(x: int, y: int, w: int, h: int, side: int = SYNTH_IMAGE_SIDE) -> RunLengthMask:
    raster = np.zeros((side, side), dtype=np.uint8)
    raster[y:y + h, x:x + w] = 1
    return rle_encode(raster)


def _gt_items(task: TaskKind):
    if task is TaskKind.DETECTION:
        return tuple(BoxItem((x, y, w, h), cat) for x, y, w, h, cat in SYNTH_OBJECTS)
    return tuple(
        MaskItem(_rect_mask(int(x), int(y), int(w), int(h)), cat)
        for x, y, w, h, cat in SYNTH_OBJECTS
    )


def _shift_item(item, shift: int):
    if isinstance(item, BoxItem):
        x, y, w, h = item.bbox
        return BoxItem((x + shift, y + shift, w, h), item.category, item.confidence)
    raster = np.zeros((item.mask.height, item.mask.width), dtype=np.uint8)
    src = np.asarray(np.nonzero(np.array(_decode_cache(item.mask))))
    raster[src[0] + shift, src[1] + shift] = 1
    return MaskItem(rle_encode(raster), item.category, item.confidence)


_MASK_CACHE = {}


def _decode_cache(mask: RunLengthMask):
    key = (mask.width, mask.height, mask.counts)
    if key not in _MASK_CACHE:
        _MASK_CACHE[key] = rle_decode(mask)
    return _MASK_CACHE[key]


def synth_predict(model: SynthModel, image_id: str, ground_truth, spec=None) -> PredictionRecord:
    """Prediction for one (model, image, cell); spec None means pristine.

    Classification: the pristine answer is the ground truth when the
    model's per-image skill draw allows it, otherwise a deterministic
    wrong label; a degraded answer flips to a deterministic other label
    once effective severity reaches the model's flip threshold.
    Detection/segmentation: pristine output is the ground truth at
    confidence 0.9; degradation drops each item past its own threshold
    and shifts the survivors by floor(4 * severity) pixels.
    """
    if model.task is TaskKind.CLASSIFICATION:
        label = _pristine_class_label(model, image_id, ground_truth)
        if spec is not None and effective_severity(spec) >= _class_flip_threshold(model, image_id):
            label = _other_label(label, model.behavior_key, image_id, "flipped")
        payload = ClassPrediction(label, SYNTH_CONFIDENCE)
        return PredictionRecord(model.model_id, image_id, spec, payload)

    items = [
        type(it)(it.bbox, it.category, SYNTH_CONFIDENCE)
        if isinstance(it, BoxItem)
        else MaskItem(it.mask, it.category, SYNTH_CONFIDENCE)
        for it in ground_truth
    ]
    if spec is not None:
        e = effective_severity(spec)
        shift = _shift_px(spec)
        kept = []
        for j, it in enumerate(items):
            if e >= _item_drop_threshold(model, image_id, j):
                continue
            kept.append(_shift_item(it, shift) if shift else it)
        items = kept
    payload = (
        DetectionSet(tuple(items))
        if model.task is TaskKind.DETECTION
        else InstanceSet(tuple(items))
    )
    return PredictionRecord(model.model_id, image_id, spec, payload)


# ---------------------------------------------------------------------------
# Closed-form oracle
# ---------------------------------------------------------------------------

def _check_shift_keeps_match(ground_truth, shift: int, tau: Fraction):
    """Exact-arithmetic check that a diagonal shift cannot break a match."""
    for it in ground_truth:
        if isinstance(it, BoxItem):
            w, h = int(it.bbox[2]), int(it.bbox[3])
        else:
            # synthetic masks are filled rectangles; recover the extents
            raster = _decode_cache(it.mask)
            rows = np.any(raster, axis=1).sum()
            cols = np.any(raster, axis=0).sum()
            w, h = int(cols), int(rows)
        if shift >= min(w, h):
            raise ValidationError("synthetic shift wipes out an object entirely")
        inter = Fraction((w - shift) * (h - shift))
        union = Fraction(2 * w * h) - inter
        if inter / union < tau:
            raise ValidationError(
                f"synthetic corpus violates the match guarantee: {w}x{h} at shift {shift}"
            )


def oracle_labels(
    models,
    image_ground_truths: dict,
    specs,
    lambda1: float = 0.5,
    tau: float = 0.5,
) -> dict:
    """Expected quality labels, derived straight from the threshold
    predicates (and exact rational mean-AP arithmetic for set tasks)."""
    models = list(models)
    tasks = {m.task for m in models}
    if len(tasks) != 1:
        raise ValidationError("oracle needs a single-task ensemble")
    task = tasks.pop()
    image_ids = list(image_ground_truths)
    specs = list(specs)
    n_samples = len(image_ids) * len(specs)

    cons = np.zeros((len(models), n_samples), dtype=np.float64)
    acc = np.zeros_like(cons)
    tau_frac = Fraction(tau).limit_denominator(1000)
    for mi, model in enumerate(models):
        for ii, image_id in enumerate(image_ids):
            gt = image_ground_truths[image_id]
            if task is TaskKind.CLASSIFICATION:
                pristine = _pristine_class_label(model, image_id, gt)
                flip_at = _class_flip_threshold(model, image_id)
                for si, spec in enumerate(specs):
                    col = ii * len(specs) + si
                    if effective_severity(spec) >= flip_at:
                        flipped = _other_label(pristine, model.behavior_key, image_id, "flipped")
                        cons[mi, col] = 0.0
                        acc[mi, col] = 1.0 if flipped == gt else 0.0
                    else:
                        cons[mi, col] = 1.0
                        acc[mi, col] = 1.0 if pristine == gt else 0.0
            else:
                thresholds = [
                    _item_drop_threshold(model, image_id, j) for j in range(len(gt))
                ]
                categories = sorted({it.category for it in gt})
                for si, spec in enumerate(specs):
                    col = ii * len(specs) + si
                    e = effective_severity(spec)
                    kept = [j for j, thr in enumerate(thresholds) if e < thr]
                    if kept:
                        _check_shift_keeps_match(
                            [gt[j] for j in kept], _shift_px(spec), tau_frac
                        )
                    # one object per category: AP is 1 for a surviving
                    # category, 0 otherwise
                    kept_cats = {gt[j].category for j in kept}
                    score = Fraction(len(kept_cats), len(categories))
                    cons[mi, col] = float(score)
                    acc[mi, col] = float(score)

    from .core import normalize_weights

    weight_map = normalize_weights([m.record() for m in models])
    w = np.array([weight_map[m.model_id] for m in models], dtype=np.float64)
    cons_label = np.clip(w @ cons, 0.0, 1.0)
    acc_label = np.clip(w @ acc, 0.0, 1.0)
    comp = lambda1 * cons_label + (1.0 - lambda1) * acc_label
    comp = np.clip(comp, np.minimum(cons_label, acc_label), np.maximum(cons_label, acc_label))

    out = {}
    for ii, image_id in enumerate(image_ids):
        for si, spec in enumerate(specs):
            col = ii * len(specs) + si
            out[(image_id, spec)] = QualityLabel(
                float(cons_label[col]), float(acc_label[col]), float(comp[col])
            )
    return out


# ---------------------------------------------------------------------------
# Ready-made ensembles and corpus
# ---------------------------------------------------------------------------

def heterogeneous_ensemble(task) -> tuple:
    task = TaskKind(task)
    return (
        SynthModel("synth-a", task, skill=0.95, robustness=1.6),
        SynthModel("synth-b", task, skill=0.85, robustness=1.1),
        SynthModel("synth-c", task, skill=0.75, robustness=0.7),
        SynthModel("synth-d", task, skill=0.90, robustness=0.45),
    )


def homogeneous_ensemble(task, n: int = 5) -> tuple:
    """Clones sharing one behavior key: every member predicts identically."""
    task = TaskKind(task)
    return tuple(
        SynthModel(f"synth-h{i + 1}", task, skill=0.8, robustness=0.9, behavior_key="synth-h")
        for i in range(n)
    )


def synth_image(index: int, side: int = SYNTH_IMAGE_SIDE) -> np.ndarray:
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    img = np.stack(
        [
            127.5 + 127.5 * np.sin(2.0 * np.pi * (xx / side + 0.13 * index)),
            255.0 * yy / max(side - 1, 1),
            (xx + yy + 17.0 * index) % 256.0,
        ],
        axis=-1,
    )
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def synth_roi_mask(side: int = SYNTH_IMAGE_SIDE) -> np.ndarray:
    mask = np.zeros((side, side), dtype=np.uint8)
    q = side // 4
    mask[q:side - q, q:side - q] = 255
    return mask


def ground_truth_for(task, index: int):
    task = TaskKind(task)
    if task is TaskKind.CLASSIFICATION:
        return index % N_CATEGORIES
    return _gt_items(task)


def build_corpus(task, out_dir: str, n_images: int = 3) -> DatasetManifest:
    """Write a tiny on-disk corpus (images, masks) and return its manifest."""
    import os

    from .io import save_image_png, save_mask_png

    task = TaskKind(task)
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i in range(n_images):
        image_id = f"synth-{i:03d}"
        image_path = os.path.join(out_dir, f"{image_id}.png")
        mask_path = os.path.join(out_dir, f"{image_id}_mask.png")
        save_image_png(image_path, synth_image(i))
        save_mask_png(mask_path, synth_roi_mask())
        entries.append(ImageEntry(image_id, image_path, mask_path, ground_truth_for(task, i)))
    return DatasetManifest(task=task, images=tuple(entries))
