"""Ensemble quality labels and the cross-model stability protocol.

Per-model agreement scores are collected into a dense tensor over
(model, image, grid cell), aggregated into consistency / accuracy /
composite labels with performance-proportional model weights, and
validated by repeatedly splitting the ensemble into two subsets and
correlating the label vectors each subset produces on its own.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image

from . import evaluation
from .agreement import MatchConfig, agreement
from .core import (
    PAYLOAD_KIND_FOR_TASK,
    DatasetManifest,
    DetectionSet,
    DistortionSpec,
    InstanceSet,
    QualityLabel,
    TaskKind,
    ValidationError,
    normalize_weights,
)

WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ScoreTensor:
    """Dense per-model agreement scores over every (image, grid cell)."""

    model_ids: tuple
    sample_keys: tuple  # ((image_id, DistortionSpec), ...)
    consistency: np.ndarray  # (n_models, n_samples)
    accuracy: np.ndarray

    def __post_init__(self):
        m, k = len(self.model_ids), len(self.sample_keys)
        for name in ("consistency", "accuracy"):
            arr = getattr(self, name)
            if arr.shape != (m, k):
                raise ValidationError(f"{name} tensor shape {arr.shape}, expected {(m, k)}")
            if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
                raise ValidationError(f"{name} agreement values outside [0, 1]")
            arr.flags.writeable = False


@dataclass(frozen=True)
class StabilityReport:
    """Mean/std of SRCC, PLCC, and RMSE between subset-generated label
    vectors, per label type, over repeated random ensemble splits."""

    per_label: dict  # label kind -> {"srcc_mean": ..., "srcc_std": ..., ...}
    n_trials: int
    split_fraction: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "per_label": self.per_label,
            "n_trials": self.n_trials,
            "split_fraction": self.split_fraction,
            "seed": self.seed,
        }


def _check_lambdas(lambda1: float, lambda2: float):
    if not (0.0 <= lambda1 <= 1.0 and 0.0 <= lambda2 <= 1.0):
        raise ValidationError(f"lambda weights must lie in [0, 1], got {lambda1}, {lambda2}")
    if abs(lambda1 + lambda2 - 1.0) > WEIGHT_SUM_TOL:
        raise ValidationError(f"lambda weights must sum to 1, got {lambda1} + {lambda2}")


def _weight_vector(weights: dict, model_ids) -> np.ndarray:
    if set(weights) != set(model_ids):
        raise ValidationError(
            f"weights cover {sorted(weights)} but tensor has models {sorted(model_ids)}"
        )
    w = np.array([float(weights[m]) for m in model_ids], dtype=np.float64)
    if abs(float(w.sum()) - 1.0) > WEIGHT_SUM_TOL:
        raise ValidationError(f"weights sum to {w.sum()}, expected 1")
    return w


def _labels_from_weights(scores: ScoreTensor, w: np.ndarray, lambda1: float, lambda2: float):
    cons = np.clip(w @ scores.consistency, 0.0, 1.0)
    acc = np.clip(w @ scores.accuracy, 0.0, 1.0)
    comp = lambda1 * cons + lambda2 * acc
    # guard the convexity bound against float round-off
    comp = np.clip(comp, np.minimum(cons, acc), np.maximum(cons, acc))
    return cons, acc, comp


def mmos(scores: ScoreTensor, weights: dict, lambda1: float = 0.5, lambda2: float = 0.5) -> dict:
    """Aggregate per-model agreements into quality labels, one per
    (image, grid cell): consistency and accuracy are the weighted model
    means, the composite their convex combination."""
    _check_lambdas(lambda1, lambda2)
    w = _weight_vector(weights, scores.model_ids)
    cons, acc, comp = _labels_from_weights(scores, w, lambda1, lambda2)
    return {
        key: QualityLabel(float(cons[i]), float(acc[i]), float(comp[i]))
        for i, key in enumerate(scores.sample_keys)
    }


def validate_labels(
    scores: ScoreTensor,
    models,
    n_trials: int = 100,
    split: float = 0.8,
    seed: int = 0,
    lambda1: float = 0.5,
) -> StabilityReport:
    """Split the ensemble into two random subsets per trial, renormalize
    weights inside each subset, generate both label vectors, and record the
    correlation/error between them for every label type."""
    models = list(models)
    by_id = {m.model_id: m for m in models}
    if set(by_id) != set(scores.model_ids):
        raise ValidationError("model records do not match the score tensor's model axis")
    n_models = len(scores.model_ids)
    if n_models < 2:
        raise ValidationError(f"need at least 2 models to validate labels, got {n_models}")
    if not 0.0 < split < 1.0:
        raise ValidationError(f"split fraction {split} outside (0, 1)")
    lambda2 = 1.0 - lambda1

    perf = np.array(
        [by_id[m].benchmark_perf for m in scores.model_ids], dtype=np.float64
    )
    stats = {kind: {"srcc": [], "plcc": [], "rmse": []} for kind in evaluation.LABEL_KINDS}
    n_major = min(max(int(round(split * n_models)), 1), n_models - 1)
    for trial in range(n_trials):
        rng = np.random.default_rng((int(seed), trial))
        perm = rng.permutation(n_models)
        halves = []
        for subset in (perm[:n_major], perm[n_major:]):
            w = np.zeros(n_models, dtype=np.float64)
            w[subset] = perf[subset] / perf[subset].sum()
            halves.append(_labels_from_weights(scores, w, lambda1, lambda2))
        for kind_idx, kind in enumerate(evaluation.LABEL_KINDS):
            a, b = halves[0][kind_idx], halves[1][kind_idx]
            s = evaluation.srcc(a, b)
            p = evaluation.plcc(a, b)
            stats[kind]["srcc"].append(np.nan if s is None else s)
            stats[kind]["plcc"].append(np.nan if p is None else p)
            stats[kind]["rmse"].append(evaluation.rmse(a, b))

    per_label = {}
    for kind in evaluation.LABEL_KINDS:
        entry = {}
        for stat_name, values in stats[kind].items():
            arr = np.asarray(values, dtype=np.float64)
            entry[f"{stat_name}_mean"] = float(arr.mean())
            entry[f"{stat_name}_std"] = float(arr.std())
        per_label[kind] = entry
    return StabilityReport(
        per_label=per_label, n_trials=n_trials, split_fraction=split, seed=int(seed)
    )


# ---------------------------------------------------------------------------
# Building the tensor from prediction records
# ---------------------------------------------------------------------------

def _clamp_boxes(payload, width: int, height: int, where: str):
    if not isinstance(payload, DetectionSet):
        return payload
    items = []
    for it in payload.items:
        x1 = min(max(it.bbox[0], 0.0), float(width))
        y1 = min(max(it.bbox[1], 0.0), float(height))
        x2 = min(max(it.bbox[0] + it.bbox[2], 0.0), float(width))
        y2 = min(max(it.bbox[1] + it.bbox[3], 0.0), float(height))
        if x2 - x1 <= 0.0 or y2 - y1 <= 0.0:
            raise ValidationError(f"{where}: box {it.bbox} degenerate after clamping")
        if (x1, y1, x2 - x1, y2 - y1) != it.bbox:
            it = type(it)((x1, y1, x2 - x1, y2 - y1), it.category, it.confidence)
        items.append(it)
    return DetectionSet(tuple(items))


def _check_mask_dims(payload, width: int, height: int, where: str):
    if isinstance(payload, InstanceSet):
        for it in payload.items:
            if (it.mask.width, it.mask.height) != (width, height):
                raise ValidationError(
                    f"{where}: instance mask {it.mask.width}x{it.mask.height} "
                    f"does not match image {width}x{height}"
                )
    return payload


def build_score_tensor(
    manifest: DatasetManifest,
    records,
    model_ids,
    cfg: Optional[MatchConfig] = None,
) -> ScoreTensor:
    """Compute per-model consistency/accuracy agreements for every
    (model, image, grid cell).

    Every model must supply a prediction for each image's pristine version
    and for every grid cell; missing triples are a hard error that names
    the first 10 offenders.
    """
    cfg = cfg or MatchConfig()
    model_ids = tuple(model_ids)
    if not model_ids:
        raise ValidationError("empty model list")
    task = manifest.task
    expect_kind = PAYLOAD_KIND_FOR_TASK[task]

    sizes = {}
    for entry in manifest.images:
        with Image.open(entry.image_path) as im:
            sizes[entry.image_id] = im.size

    wanted_models = set(model_ids)
    indexed = {}
    for rec in records:
        if rec.model_id not in wanted_models:
            continue
        if rec.payload.kind != expect_kind:
            raise ValidationError(
                f"record ({rec.model_id}, {rec.image_id}): payload kind "
                f"{rec.payload.kind!r} does not match task {task.value!r}"
            )
        key = (rec.model_id, rec.image_id, rec.distortion)
        if key in indexed:
            raise ValidationError(f"duplicate prediction record for {key}")
        if rec.image_id in sizes:
            w, h = sizes[rec.image_id]
            where = f"record ({rec.model_id}, {rec.image_id}, {rec.distortion})"
            payload = _clamp_boxes(rec.payload, w, h, where)
            payload = _check_mask_dims(payload, w, h, where)
        else:
            payload = rec.payload
        indexed[key] = payload

    specs = manifest.specs()
    missing = []
    for model_id in model_ids:
        for entry in manifest.images:
            for dist in (None,) + specs:
                if (model_id, entry.image_id, dist) not in indexed:
                    missing.append((model_id, entry.image_id, "pristine" if dist is None else dist))
    if missing:
        shown = ", ".join(str(m) for m in missing[:10])
        raise ValidationError(
            f"{len(missing)} missing prediction record(s); first 10: {shown}"
        )

    sample_keys = tuple(
        (entry.image_id, spec) for entry in manifest.images for spec in specs
    )
    cons = np.zeros((len(model_ids), len(sample_keys)), dtype=np.float64)
    acc = np.zeros_like(cons)
    for mi, model_id in enumerate(model_ids):
        for ei, entry in enumerate(manifest.images):
            pristine = indexed[(model_id, entry.image_id, None)]
            for si, spec in enumerate(specs):
                col = ei * len(specs) + si
                degraded = indexed[(model_id, entry.image_id, spec)]
                cons[mi, col] = agreement(
                    task, degraded, pristine, cfg, reference_is_prediction=True
                )
                acc[mi, col] = agreement(
                    task, degraded, entry.ground_truth, cfg, reference_is_prediction=False
                )
    return ScoreTensor(
        model_ids=model_ids,
        sample_keys=sample_keys,
        consistency=cons,
        accuracy=acc,
    )


def score_labels(
    manifest: DatasetManifest,
    records,
    models,
    cfg: Optional[MatchConfig] = None,
    lambda1: float = 0.5,
) -> dict:
    """Full scoring pipeline: records -> agreement tensor -> quality labels."""
    models = list(models)
    for m in models:
        if m.task != manifest.task:
            raise ValidationError(
                f"model {m.model_id!r} is a {m.task.value} model; manifest task is {manifest.task.value}"
            )
    tensor = build_score_tensor(manifest, records, [m.model_id for m in models], cfg)
    weights = normalize_weights(models)
    return mmos(tensor, weights, lambda1, 1.0 - lambda1)
