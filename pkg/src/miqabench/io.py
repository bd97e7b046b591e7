"""File formats and persistence.

Manifests and reports are single JSON documents.  Prediction records are
line-delimited JSON (one record per line) so million-record files can be
streamed.  Label, score, registry, and fidelity tables are comma-delimited
text with a fixed header; lines starting with '#' carry provenance and are
skipped on load.  All writers go through a temp file in the target
directory followed by an atomic rename.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile

import numpy as np
from PIL import Image

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
    validate_image,
    validate_mask,
)
from .rle import RunLengthMask


class ParseError(ValueError):
    """Raised when a file cannot be parsed into its declared schema."""


# ---------------------------------------------------------------------------
# Atomic writes and hashing
# ---------------------------------------------------------------------------

def atomic_write_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _provenance_lines(provenance) -> str:
    if provenance is None:
        return ""
    return "# " + json.dumps(provenance, sort_keys=True) + "\n"


def _data_lines(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            yield line


# ---------------------------------------------------------------------------
# Rasters
# ---------------------------------------------------------------------------

def load_image(path: str) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return validate_image(arr, path)


def load_roi_mask(path: str) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.uint8)
    # tolerate greyscale encodings of a binary mask, snap to {0, 255}
    arr = np.where(arr >= 128, 255, 0).astype(np.uint8)
    return validate_mask(arr, path)


def save_image_png(path: str, img: np.ndarray) -> None:
    validate_image(img, path)
    import io as _io

    buf = _io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def save_mask_png(path: str, mask: np.ndarray) -> None:
    validate_mask(mask, path)
    import io as _io

    buf = _io.BytesIO()
    Image.fromarray(mask, mode="L").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def _raster_size(path: str):
    with Image.open(path) as im:
        return im.size  # (width, height)


# ---------------------------------------------------------------------------
# Ground truth / payload serialization
# ---------------------------------------------------------------------------

def _ground_truth_to_json(task: TaskKind, gt):
    if task is TaskKind.CLASSIFICATION:
        return gt
    if task is TaskKind.DETECTION:
        return [{"bbox": list(it.bbox), "category": it.category} for it in gt]
    return [{"mask_rle": it.mask.to_dict(), "category": it.category} for it in gt]


def _ground_truth_from_json(task: TaskKind, obj, where: str):
    try:
        if task is TaskKind.CLASSIFICATION:
            if isinstance(obj, (list, dict)):
                raise ValidationError(f"{where}: classification ground truth must be a category id")
            return obj
        if task is TaskKind.DETECTION:
            return tuple(BoxItem(tuple(d["bbox"]), d["category"]) for d in obj)
        return tuple(
            MaskItem(RunLengthMask.from_dict(d["mask_rle"]), d["category"]) for d in obj
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{where}: malformed ground truth ({exc})") from exc


def payload_to_json(payload) -> dict:
    if isinstance(payload, ClassPrediction):
        return {"kind": payload.kind, "label": payload.label, "confidence": payload.confidence}
    if isinstance(payload, DetectionSet):
        return {
            "kind": payload.kind,
            "items": [
                {"bbox": list(it.bbox), "category": it.category, "confidence": it.confidence}
                for it in payload.items
            ],
        }
    if isinstance(payload, InstanceSet):
        return {
            "kind": payload.kind,
            "items": [
                {"mask_rle": it.mask.to_dict(), "category": it.category, "confidence": it.confidence}
                for it in payload.items
            ],
        }
    raise ValidationError(f"unknown payload type {type(payload).__name__}")


def payload_from_json(obj: dict, where: str):
    try:
        kind = obj["kind"]
        if kind == "classification":
            return ClassPrediction(obj["label"], float(obj["confidence"]))
        if kind == "detection":
            return DetectionSet(
                tuple(
                    BoxItem(tuple(d["bbox"]), d["category"], float(d["confidence"]))
                    for d in obj["items"]
                )
            )
        if kind == "segmentation":
            return InstanceSet(
                tuple(
                    MaskItem(
                        RunLengthMask.from_dict(d["mask_rle"]),
                        d["category"],
                        float(d["confidence"]),
                    )
                    for d in obj["items"]
                )
            )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{where}: malformed payload ({exc})") from exc
    raise ParseError(f"{where}: unknown payload kind {obj.get('kind')!r}")


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def load_manifest(path: str) -> DatasetManifest:
    """Load and eagerly validate a dataset manifest document."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc

    try:
        task = TaskKind(doc["task"])
        raw_images = doc["images"]
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{path}: missing or invalid manifest field ({exc})") from exc

    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    seen = set()
    entries = []
    for raw in raw_images:
        try:
            image_id = raw["image_id"]
            image_path = resolve(raw["image_path"])
            mask_path = resolve(raw["mask_path"])
            gt_raw = raw["ground_truth"]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"{path}: malformed image entry ({exc})") from exc
        if image_id in seen:
            raise ValidationError(f"{path}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        if not os.path.exists(image_path):
            raise ValidationError(f"{path}: image {image_id!r}: missing file {image_path}")
        if not os.path.exists(mask_path):
            raise ValidationError(f"{path}: image {image_id!r}: missing mask {mask_path}")
        img_size = _raster_size(image_path)
        mask_size = _raster_size(mask_path)
        if img_size != mask_size:
            raise ValidationError(
                f"{path}: image {image_id!r}: mask is {mask_size[0]}x{mask_size[1]} "
                f"but image is {img_size[0]}x{img_size[1]}"
            )
        gt = _ground_truth_from_json(task, gt_raw, f"{path}: image {image_id!r}")
        entries.append(ImageEntry(image_id, image_path, mask_path, gt))

    grid = doc.get("grid")
    if grid is None:
        return DatasetManifest(task=task, images=tuple(entries))
    cells = tuple((int(c[0]), int(c[1])) for c in grid)
    return DatasetManifest(task=task, images=tuple(entries), grid=cells)


def save_manifest(path: str, manifest: DatasetManifest) -> None:
    doc = {
        "task": manifest.task.value,
        "images": [
            {
                "image_id": e.image_id,
                "image_path": e.image_path,
                "mask_path": e.mask_path,
                "ground_truth": _ground_truth_to_json(manifest.task, e.ground_truth),
            }
            for e in manifest.images
        ],
        "grid": [list(c) for c in manifest.grid],
    }
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Prediction records (JSONL)
# ---------------------------------------------------------------------------

def _distortion_to_json(d):
    return "pristine" if d is None else d.to_dict()


def _distortion_from_json(obj, where: str):
    if obj == "pristine":
        return None
    try:
        return DistortionSpec.from_dict(obj)
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{where}: malformed distortion ({exc})") from exc


def save_predictions(path: str, records, provenance=None) -> None:
    lines = [_provenance_lines(provenance)] if provenance else []
    for rec in records:
        lines.append(
            json.dumps(
                {
                    "model_id": rec.model_id,
                    "image_id": rec.image_id,
                    "distortion": _distortion_to_json(rec.distortion),
                    "payload": payload_to_json(rec.payload),
                },
                sort_keys=True,
            )
            + "\n"
        )
    atomic_write_text(path, "".join(lines))


def iter_predictions(path: str):
    for lineno, line in enumerate(_data_lines(path), start=1):
        where = f"{path}:{lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{where}: not valid JSON ({exc})") from exc
        try:
            yield PredictionRecord(
                model_id=obj["model_id"],
                image_id=obj["image_id"],
                distortion=_distortion_from_json(obj["distortion"], where),
                payload=payload_from_json(obj["payload"], where),
            )
        except KeyError as exc:
            raise ParseError(f"{where}: missing field {exc}") from exc


def load_predictions(path: str):
    return list(iter_predictions(path))


# ---------------------------------------------------------------------------
# Model registry (CSV)
# ---------------------------------------------------------------------------

REGISTRY_HEADER = "model_id,task,benchmark_perf"


def save_model_registry(path: str, models, provenance=None) -> None:
    rows = [_provenance_lines(provenance), REGISTRY_HEADER + "\n"]
    for m in models:
        rows.append(f"{m.model_id},{m.task.value},{m.benchmark_perf!r}\n")
    atomic_write_text(path, "".join(rows))


def load_model_registry(path: str):
    lines = list(_data_lines(path))
    if not lines or lines[0] != REGISTRY_HEADER:
        raise ParseError(f"{path}: expected header {REGISTRY_HEADER!r}")
    models = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 3:
            raise ParseError(f"{path}: bad registry row {line!r}")
        models.append(ModelRecord(parts[0], TaskKind(parts[1]), float(parts[2])))
    return models


# ---------------------------------------------------------------------------
# Label table (CSV): one row per (image, grid cell)
# ---------------------------------------------------------------------------

LABEL_HEADER = "image_id,distortion_type,roi_level,bg_level,consistency,accuracy,composite"


def save_label_table(path: str, labels: dict, provenance=None) -> None:
    """labels maps (image_id, DistortionSpec) -> QualityLabel."""
    rows = [_provenance_lines(provenance), LABEL_HEADER + "\n"]
    for (image_id, spec), lab in labels.items():
        rows.append(
            f"{image_id},{spec.distortion_type},{spec.roi_level},{spec.bg_level},"
            f"{lab.consistency!r},{lab.accuracy!r},{lab.composite!r}\n"
        )
    atomic_write_text(path, "".join(rows))


def load_label_table(path: str) -> dict:
    lines = list(_data_lines(path))
    if not lines or lines[0] != LABEL_HEADER:
        raise ParseError(f"{path}: expected header {LABEL_HEADER!r}")
    labels = {}
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 7:
            raise ParseError(f"{path}: bad label row {line!r}")
        spec = DistortionSpec(parts[1], int(parts[2]), int(parts[3]))
        labels[(parts[0], spec)] = QualityLabel(
            float(parts[4]), float(parts[5]), float(parts[6])
        )
    return labels


# ---------------------------------------------------------------------------
# Predictor score table (CSV): one row per (image, grid cell)
# ---------------------------------------------------------------------------

SCORE_HEADER = "image_id,distortion_type,roi_level,bg_level,score"


def save_score_table(path: str, scores: dict, provenance=None) -> None:
    """scores maps (image_id, DistortionSpec) -> float."""
    rows = [_provenance_lines(provenance), SCORE_HEADER + "\n"]
    for (image_id, spec), value in scores.items():
        rows.append(
            f"{image_id},{spec.distortion_type},{spec.roi_level},{spec.bg_level},{float(value)!r}\n"
        )
    atomic_write_text(path, "".join(rows))


def load_score_table(path: str) -> dict:
    lines = list(_data_lines(path))
    if not lines or lines[0] != SCORE_HEADER:
        raise ParseError(f"{path}: expected header {SCORE_HEADER!r}")
    scores = {}
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 5:
            raise ParseError(f"{path}: bad score row {line!r}")
        spec = DistortionSpec(parts[1], int(parts[2]), int(parts[3]))
        scores[(parts[0], spec)] = float(parts[4])
    return scores


# ---------------------------------------------------------------------------
# JSON report documents
# ---------------------------------------------------------------------------

def save_json_document(path: str, doc: dict) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_json_document(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
