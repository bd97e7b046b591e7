"""Task-specific agreement between a prediction set and a reference set.

Classification agreement is a label indicator.  Detection and
segmentation go through confidence-ordered greedy one-to-one matching
(same category, IoU at or above the threshold) and are summarized as
per-image mAP over the union of categories present on either side.

Precision, recall, AP, and mAP are computed in exact rational arithmetic
and converted to float at the boundary, so worked examples land on the
exactly-rounded value and independent reimplementations agree to the
last bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import (
    ClassPrediction,
    DetectionSet,
    InstanceSet,
    TaskKind,
    ValidationError,
)
from .rle import RunLengthMask, rle_decode

COCO_RANGE_TAUS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))

IOU_MODE_SINGLE = "single_tau"
IOU_MODE_COCO_RANGE = "coco_range"


@dataclass(frozen=True)
class MatchConfig:
    iou_threshold: float = 0.5
    ref_confidence: float = 0.5
    iou_mode: str = IOU_MODE_SINGLE

    def __post_init__(self):
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValidationError(f"iou_threshold {self.iou_threshold} outside (0, 1)")
        if not 0.0 <= self.ref_confidence < 1.0:
            raise ValidationError(f"ref_confidence {self.ref_confidence} outside [0, 1)")
        if self.iou_mode not in (IOU_MODE_SINGLE, IOU_MODE_COCO_RANGE):
            raise ValidationError(f"unknown iou_mode {self.iou_mode!r}")

    def taus(self):
        if self.iou_mode == IOU_MODE_COCO_RANGE:
            return COCO_RANGE_TAUS
        return (self.iou_threshold,)


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple  # (pred index, ref index)
    precision: float
    recall: float


def box_iou(a, b) -> float:
    ax, ay, aw, ah = (float(v) for v in a)
    bx, by, bw, bh = (float(v) for v in b)
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union


def mask_iou(a: RunLengthMask, b: RunLengthMask) -> float:
    if (a.width, a.height) != (b.width, b.height):
        raise ValidationError(
            f"mask dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    da = rle_decode(a).astype(bool)
    db = rle_decode(b).astype(bool)
    inter = int(np.count_nonzero(da & db))
    union = int(np.count_nonzero(da | db))
    if union == 0:
        return 1.0  # two empty masks agree perfectly
    return float(Fraction(inter, union))


def classification_agreement(pred, ref) -> float:
    """Indicator: 1.0 when the labels are equal, else 0.0."""
    return 1.0 if pred == ref else 0.0


def _item_iou(a, b) -> float:
    if hasattr(a, "bbox"):
        return box_iou(a.bbox, b.bbox)
    return mask_iou(a.mask, b.mask)


def _payload_items(payload):
    if isinstance(payload, (DetectionSet, InstanceSet)):
        return payload.items
    if isinstance(payload, (tuple, list)):
        return tuple(payload)
    raise ValidationError(f"expected an item set, got {type(payload).__name__}")


def _same_kind(preds, refs):
    kinds = set()
    for it in list(preds) + list(refs):
        kinds.add("box" if hasattr(it, "bbox") else "mask")
    if len(kinds) > 1:
        raise ValidationError("mixed box/mask payloads in one matching call")


def _confidence_order(items):
    return sorted(range(len(items)), key=lambda i: (-(items[i].confidence or 0.0), i))


def greedy_match(preds, refs, cfg: MatchConfig) -> MatchResult:
    """Confidence-ordered greedy one-to-one matching.

    Predictions are visited in descending confidence (input order breaks
    ties); each takes the unmatched same-category reference of maximal IoU,
    accepted when IoU >= threshold.
    """
    preds = _payload_items(preds)
    refs = _payload_items(refs)
    _same_kind(preds, refs)
    k_pred, k_ref = len(preds), len(refs)

    ref_taken = [False] * k_ref
    pairs = []
    for pi in _confidence_order(preds):
        best_iou = -1.0
        best_ref = -1
        for ri in range(k_ref):
            if ref_taken[ri] or refs[ri].category != preds[pi].category:
                continue
            iou = _item_iou(preds[pi], refs[ri])
            if iou > best_iou:
                best_iou = iou
                best_ref = ri
        if best_ref >= 0 and best_iou >= cfg.iou_threshold:
            ref_taken[best_ref] = True
            pairs.append((pi, best_ref))
    pairs.sort()

    n = len(pairs)
    if k_pred == 0 and k_ref == 0:
        precision = recall = 1.0
    else:
        precision = float(Fraction(n, k_pred)) if k_pred else 0.0
        recall = float(Fraction(n, k_ref)) if k_ref else 0.0
    return MatchResult(pairs=tuple(pairs), precision=precision, recall=recall)


def _match_flags(preds, refs, tau: float):
    """True-positive flag per prediction in confidence order, via greedy
    matching restricted to one category's items."""
    ref_taken = [False] * len(refs)
    flags = []
    for pi in _confidence_order(preds):
        best_iou = -1.0
        best_ref = -1
        for ri in range(len(refs)):
            if ref_taken[ri]:
                continue
            iou = _item_iou(preds[pi], refs[ri])
            if iou > best_iou:
                best_iou = iou
                best_ref = ri
        if best_ref >= 0 and best_iou >= tau:
            ref_taken[best_ref] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def _ap_fraction(preds, refs, tau: float) -> Fraction:
    """Exact area under the upper-envelope precision-recall step curve for
    one category at one IoU threshold."""
    k_ref = len(refs)
    if k_ref == 0 or len(preds) == 0:
        return Fraction(0)
    flags = _match_flags(preds, refs, tau)
    tp = 0
    points = []  # (recall, precision) after each ranked prediction
    for i, flag in enumerate(flags, start=1):
        if flag:
            tp += 1
        points.append((Fraction(tp, k_ref), Fraction(tp, i)))
    # monotone upper envelope of precision, scanned right to left
    envelope = [Fraction(0)] * len(points)
    best = Fraction(0)
    for i in range(len(points) - 1, -1, -1):
        best = max(best, points[i][1])
        envelope[i] = best
    area = Fraction(0)
    prev_recall = Fraction(0)
    for (recall, _), env in zip(points, envelope):
        if recall > prev_recall:
            area += (recall - prev_recall) * env
            prev_recall = recall
    return area


def average_precision(preds, refs, category, cfg: MatchConfig) -> float:
    """AP for one category; distinct categories never interact."""
    preds = [it for it in _payload_items(preds) if it.category == category]
    refs = [it for it in _payload_items(refs) if it.category == category]
    _same_kind(preds, refs)
    taus = cfg.taus()
    total = sum(_ap_fraction(preds, refs, tau) for tau in taus)
    return float(total / len(taus))


def map_score(preds, refs, cfg: MatchConfig) -> float:
    """Mean AP over the union of categories present on either side.

    A category present on only one side scores 0; if both sides are empty
    overall, agreement on "nothing present" is perfect (1.0).
    """
    pred_items = _payload_items(preds)
    ref_items = _payload_items(refs)
    _same_kind(pred_items, ref_items)
    categories = []
    seen = set()
    for it in list(ref_items) + list(pred_items):
        if it.category not in seen:
            seen.add(it.category)
            categories.append(it.category)
    if not categories:
        return 1.0
    taus = cfg.taus()
    total = Fraction(0)
    for cat in categories:
        cp = [it for it in pred_items if it.category == cat]
        cr = [it for it in ref_items if it.category == cat]
        total += sum(_ap_fraction(cp, cr, tau) for tau in taus) / len(taus)
    return float(total / len(categories))


def filter_reference(payload, cfg: MatchConfig):
    """Drop low-confidence items from a model-prediction reference set.
    Ground-truth references are never filtered; classification payloads
    pass through unchanged."""
    if isinstance(payload, DetectionSet):
        return DetectionSet(
            tuple(it for it in payload.items if (it.confidence or 0.0) >= cfg.ref_confidence)
        )
    if isinstance(payload, InstanceSet):
        return InstanceSet(
            tuple(it for it in payload.items if (it.confidence or 0.0) >= cfg.ref_confidence)
        )
    return payload


def agreement(task: TaskKind, pred, reference, cfg: MatchConfig, reference_is_prediction: bool = False) -> float:
    """Agreement score in [0, 1] between a degraded-image prediction and a
    reference (ground truth, or the model's own pristine-image prediction
    when reference_is_prediction is set)."""
    task = TaskKind(task)
    if task is TaskKind.CLASSIFICATION:
        if not isinstance(pred, ClassPrediction):
            raise ValidationError("classification agreement needs a ClassPrediction")
        ref_label = reference.label if isinstance(reference, ClassPrediction) else reference
        return classification_agreement(pred.label, ref_label)

    expected = DetectionSet if task is TaskKind.DETECTION else InstanceSet
    if not isinstance(pred, expected):
        raise ValidationError(f"{task.value} agreement got {type(pred).__name__}")
    if isinstance(reference, (DetectionSet, InstanceSet)):
        if not isinstance(reference, expected):
            raise ValidationError("prediction and reference payload kinds differ")
        ref_items = filter_reference(reference, cfg) if reference_is_prediction else reference
    else:
        ref_items = tuple(reference)  # ground-truth item tuple
    return map_score(pred, ref_items, cfg)
