"""Command-line entry point.

Subcommands: degrade, score, validate-labels, characterize, evaluate,
synth-check.  Every flag can also be supplied through an environment
variable named MIQABENCH_<FLAG> (dashes become underscores); explicit
flags win.  Every output document embeds the run configuration and a
content hash of each input for provenance.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

from . import __version__, io, synthetic
from .agreement import IOU_MODE_COCO_RANGE, IOU_MODE_SINGLE, MatchConfig
from .core import (
    DISTORTION_TYPES,
    DistortionSpec,
    ValidationError,
    normalize_weights,
)
from .degradation import generate_grid
from .evaluation import LABEL_KINDS, evaluate
from .fidelity import psnr, ssim
from .labeling import build_score_tensor, mmos, score_labels, validate_labels

ENV_PREFIX = "MIQABENCH_"

GRID_INDEX_NAME = "grid_index.csv"
GRID_INDEX_HEADER = "image_id,distortion_type,roi_level,bg_level,region_mode,path"


def _env_default(flag: str, fallback):
    value = os.environ.get(ENV_PREFIX + flag.upper().replace("-", "_"))
    return fallback if value is None else value


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--seed", type=int, default=int(_env_default("seed", 0)), help="64-bit run seed"
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=int(_env_default("threads", 0)),
        help="worker threads (0 = auto)",
    )
    parser.add_argument(
        "--out", default=_env_default("out", "out"), help="output directory"
    )


def _add_match_flags(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--tau", type=float, default=float(_env_default("tau", 0.5)), help="IoU match threshold"
    )
    parser.add_argument(
        "--ref-conf",
        type=float,
        default=float(_env_default("ref-conf", 0.5)),
        help="confidence cutoff for consistency reference sets",
    )
    parser.add_argument(
        "--iou-mode",
        choices=[IOU_MODE_SINGLE, IOU_MODE_COCO_RANGE],
        default=_env_default("iou-mode", IOU_MODE_SINGLE),
    )
    parser.add_argument(
        "--lambda1",
        type=float,
        default=float(_env_default("lambda1", 0.5)),
        help="composite weight on the consistency score",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="miqabench")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("degrade", help="emit the full degradation grid for a manifest")
    p.add_argument("--manifest", required=True)
    _add_common(p)

    p = sub.add_parser("score", help="aggregate model predictions into quality labels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred", required=True, help="prediction records (jsonl)")
    p.add_argument("--models", required=True, help="model registry (csv)")
    _add_match_flags(p)
    _add_common(p)

    p = sub.add_parser("validate-labels", help="cross-model label stability report")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--trials", type=int, default=int(_env_default("trials", 100)))
    p.add_argument("--split", type=float, default=float(_env_default("split", 0.8)))
    _add_match_flags(p)
    _add_common(p)

    p = sub.add_parser("characterize", help="fidelity (psnr/ssim) table for a degraded corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--degraded", required=True, help="directory written by degrade")
    _add_common(p)

    p = sub.add_parser("evaluate", help="evaluate predictor scores against labels")
    p.add_argument("--labels", required=True)
    p.add_argument("--pred", required=True, help="predictor score table (csv)")
    p.add_argument("--label-kind", choices=list(LABEL_KINDS), required=True)
    p.add_argument("--report", required=True, help="output report path (json)")
    p.add_argument("--flat", default=None, help="optional flat csv export for plotting")
    _add_common(p)

    p = sub.add_parser("synth-check", help="end-to-end pipeline check against the closed-form oracle")
    p.add_argument(
        "--task",
        choices=["classification", "detection", "segmentation", "all"],
        default=_env_default("task", "all"),
    )
    _add_match_flags(p)
    _add_common(p)
    return parser


def _threads(args) -> int:
    return args.threads if args.threads > 0 else (os.cpu_count() or 1)


def _thread_map(fn, items, n_threads: int):
    items = list(items)
    if n_threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        return list(pool.map(fn, items))


def _provenance(args, inputs: dict) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    return {
        "tool": "miqabench",
        "version": __version__,
        "config": config,
        "inputs": {name: io.sha256_file(path) for name, path in inputs.items()},
    }


def _match_config(args) -> MatchConfig:
    return MatchConfig(
        iou_threshold=args.tau, ref_confidence=args.ref_conf, iou_mode=args.iou_mode
    )


# ---------------------------------------------------------------------------
# degrade
# ---------------------------------------------------------------------------

def cmd_degrade(args) -> int:
    manifest = io.load_manifest(args.manifest)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    cells_wanted = set(manifest.grid)

    units = [
        (entry, dist_type) for entry in manifest.images for dist_type in DISTORTION_TYPES
    ]

    def run_unit(unit):
        entry, dist_type = unit
        img = io.load_image(entry.image_path)
        mask = io.load_roi_mask(entry.mask_path)
        rows = []
        for spec, out_img in generate_grid(img, mask, dist_type, args.seed):
            if (spec.roi_level, spec.bg_level) not in cells_wanted:
                continue
            name = f"{entry.image_id}__{spec.distortion_type}__{spec.roi_level}_{spec.bg_level}.png"
            io.save_image_png(os.path.join(out_dir, name), out_img)
            rows.append(
                f"{entry.image_id},{spec.distortion_type},{spec.roi_level},"
                f"{spec.bg_level},{spec.region_mode},{name}"
            )
        return rows

    per_unit = _thread_map(run_unit, units, _threads(args))
    provenance = _provenance(args, {"manifest": args.manifest})
    lines = ["# " + _json_line(provenance), GRID_INDEX_HEADER]
    for rows in per_unit:  # units are already in manifest x type order
        lines.extend(rows)
    io.atomic_write_text(os.path.join(out_dir, GRID_INDEX_NAME), "\n".join(lines) + "\n")
    total = sum(len(rows) for rows in per_unit)
    print(f"degrade: wrote {total} cells for {len(manifest.images)} image(s) -> {out_dir}")
    return 0


def _json_line(doc: dict) -> str:
    import json

    return json.dumps(doc, sort_keys=True)


# ---------------------------------------------------------------------------
# score / validate-labels
# ---------------------------------------------------------------------------

def _load_scoring_inputs(args):
    manifest = io.load_manifest(args.manifest)
    records = io.load_predictions(args.pred)
    models = io.load_model_registry(args.models)
    for m in models:
        if m.task != manifest.task:
            raise ValidationError(
                f"registry model {m.model_id!r} is {m.task.value}; manifest task is {manifest.task.value}"
            )
    return manifest, records, models


def cmd_score(args) -> int:
    manifest, records, models = _load_scoring_inputs(args)
    labels = score_labels(
        manifest, records, models, _match_config(args), lambda1=args.lambda1
    )
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "labels.csv")
    provenance = _provenance(
        args, {"manifest": args.manifest, "pred": args.pred, "models": args.models}
    )
    io.save_label_table(out_path, labels, provenance)
    print(f"score: wrote {len(labels)} labels -> {out_path}")
    return 0


def cmd_validate_labels(args) -> int:
    manifest, records, models = _load_scoring_inputs(args)
    tensor = build_score_tensor(
        manifest, records, [m.model_id for m in models], _match_config(args)
    )
    report = validate_labels(
        tensor,
        models,
        n_trials=args.trials,
        split=args.split,
        seed=args.seed,
        lambda1=args.lambda1,
    )
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "stability_report.json")
    doc = report.to_dict()
    doc["provenance"] = _provenance(
        args, {"manifest": args.manifest, "pred": args.pred, "models": args.models}
    )
    io.save_json_document(out_path, doc)
    print(f"validate-labels: {args.trials} trial(s) -> {out_path}")
    return 0


# ---------------------------------------------------------------------------
# characterize
# ---------------------------------------------------------------------------

def cmd_characterize(args) -> int:
    manifest = io.load_manifest(args.manifest)
    index_path = os.path.join(args.degraded, GRID_INDEX_NAME)
    if not os.path.exists(index_path):
        raise ValidationError(f"no {GRID_INDEX_NAME} under {args.degraded}")
    originals = {e.image_id: io.load_image(e.image_path) for e in manifest.images}

    rows = []
    with open(index_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line == GRID_INDEX_HEADER:
                continue
            image_id, dist_type, roi, bg, _mode, name = line.split(",")
            rows.append((image_id, dist_type, int(roi), int(bg), name))

    def run_row(row):
        image_id, dist_type, roi, bg, name = row
        if image_id not in originals:
            raise ValidationError(f"index references unknown image {image_id!r}")
        degraded = io.load_image(os.path.join(args.degraded, name))
        ref = originals[image_id]
        return (
            f"{image_id},{dist_type},{roi},{bg},"
            f"{psnr(ref, degraded)!r},{ssim(ref, degraded)!r}"
        )

    out_rows = _thread_map(run_row, rows, _threads(args))
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "fidelity.csv")
    provenance = _provenance(args, {"manifest": args.manifest, "index": index_path})
    header = "image_id,distortion_type,roi_level,bg_level,psnr,ssim"
    io.atomic_write_text(
        out_path, "# " + _json_line(provenance) + "\n" + header + "\n" + "\n".join(out_rows) + "\n"
    )
    print(f"characterize: wrote {len(out_rows)} rows -> {out_path}")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _flat_rows(report) -> str:
    def fmt(value):
        return "" if value is None else repr(value)

    lines = ["scope,key,n,srcc,plcc,krcc,rmse,insufficient"]

    def emit(scope, key, block):
        lines.append(
            f"{scope},{key},{block.n},{fmt(block.srcc)},{fmt(block.plcc)},"
            f"{fmt(block.krcc)},{fmt(block.rmse)},{int(block.insufficient)}"
        )

    emit("overall", report.label_kind, report.overall)
    for family, blocks in (
        ("stratum", report.strata),
        ("region", report.by_region),
        ("distortion", report.by_distortion),
        ("severity", report.by_severity),
    ):
        for key, block in blocks.items():
            emit(family, key, block)
    return "\n".join(lines) + "\n"


def cmd_evaluate(args) -> int:
    labels = io.load_label_table(args.labels)
    predicted = io.load_score_table(args.pred)
    grid_meta = {key: key[1] for key in labels}
    report = evaluate(predicted, labels, args.label_kind, grid_meta)
    doc = report.to_dict()
    doc["provenance"] = _provenance(args, {"labels": args.labels, "pred": args.pred})
    io.save_json_document(args.report, doc)
    if args.flat:
        io.atomic_write_text(args.flat, _flat_rows(report))
    overall = report.overall
    print(
        f"evaluate[{args.label_kind}]: n={overall.n} srcc={overall.srcc} "
        f"plcc={overall.plcc} krcc={overall.krcc} rmse={overall.rmse} -> {args.report}"
    )
    return 0


# ---------------------------------------------------------------------------
# synth-check
# ---------------------------------------------------------------------------

def _synth_check_task(task: str, args) -> float:
    """Run the full pipeline on the synthetic corpus for one task and
    return the max |pipeline - oracle| over all labels."""
    base = os.path.join(args.out, task)
    corpus_dir = os.path.join(base, "corpus")
    manifest = synthetic.build_corpus(task, corpus_dir)
    manifest_path = os.path.join(base, "manifest.json")
    io.save_manifest(manifest_path, manifest)

    ensemble = synthetic.heterogeneous_ensemble(task)
    registry_path = os.path.join(base, "models.csv")
    io.save_model_registry(registry_path, [m.record() for m in ensemble])

    specs = manifest.specs()
    records = []
    for model in ensemble:
        for entry in manifest.images:
            records.append(synthetic.synth_predict(model, entry.image_id, entry.ground_truth))
            for spec in specs:
                records.append(
                    synthetic.synth_predict(model, entry.image_id, entry.ground_truth, spec)
                )
    pred_path = os.path.join(base, "predictions.jsonl")
    io.save_predictions(pred_path, records)

    # run the real pipeline from the files just written
    manifest2 = io.load_manifest(manifest_path)
    records2 = io.load_predictions(pred_path)
    models2 = io.load_model_registry(registry_path)
    cfg = _match_config(args)
    labels = score_labels(manifest2, records2, models2, cfg, lambda1=args.lambda1)
    labels_path = os.path.join(base, "labels.csv")
    io.save_label_table(labels_path, labels, _provenance(args, {"manifest": manifest_path}))

    oracle = synthetic.oracle_labels(
        ensemble,
        {e.image_id: e.ground_truth for e in manifest.images},
        specs,
        lambda1=args.lambda1,
        tau=args.tau,
    )
    if set(labels) != set(oracle):
        raise ValidationError("pipeline and oracle disagree on the label key set")
    delta = 0.0
    for key, lab in labels.items():
        ora = oracle[key]
        delta = max(
            delta,
            abs(lab.consistency - ora.consistency),
            abs(lab.accuracy - ora.accuracy),
            abs(lab.composite - ora.composite),
        )

    # label stability on a homogeneous ensemble: identical members must
    # agree perfectly in every trial
    clones = synthetic.homogeneous_ensemble(task)
    clone_records = []
    for model in clones:
        for entry in manifest.images:
            clone_records.append(
                synthetic.synth_predict(model, entry.image_id, entry.ground_truth)
            )
            for spec in specs:
                clone_records.append(
                    synthetic.synth_predict(model, entry.image_id, entry.ground_truth, spec)
                )
    tensor = build_score_tensor(manifest2, clone_records, [m.model_id for m in clones], cfg)
    stability = validate_labels(
        tensor, [m.record() for m in clones], n_trials=args.trials_for_stability, seed=args.seed
    )
    for kind, stats in stability.per_label.items():
        if not (
            stats["srcc_mean"] == 1.0
            and stats["srcc_std"] == 0.0
            and stats["plcc_mean"] == 1.0
            and stats["plcc_std"] == 0.0
            and stats["rmse_mean"] == 0.0
            and stats["rmse_std"] == 0.0
        ):
            raise ValidationError(
                f"homogeneous ensemble stability violated for {kind}: {stats}"
            )
    io.save_json_document(os.path.join(base, "stability_report.json"), stability.to_dict())

    # evaluate the composite labels against themselves: a perfect
    # predictor must score perfectly
    predicted = {key: lab.composite for key, lab in labels.items()}
    report = evaluate(predicted, labels, "composite", {key: key[1] for key in labels})
    if not (report.overall.srcc == 1.0 and report.overall.plcc is not None):
        raise ValidationError("self-evaluation did not produce a perfect rank correlation")
    if abs(report.overall.plcc - 1.0) > 1e-9 or report.overall.rmse > 1e-9:
        raise ValidationError(
            f"self-evaluation remap drifted: plcc={report.overall.plcc} rmse={report.overall.rmse}"
        )
    io.save_json_document(os.path.join(base, "self_eval_report.json"), report.to_dict())
    return delta


def cmd_synth_check(args) -> int:
    tasks = (
        ["classification", "detection", "segmentation"] if args.task == "all" else [args.task]
    )
    if not hasattr(args, "trials_for_stability"):
        args.trials_for_stability = 100
    failed = False
    for task in tasks:
        start = time.perf_counter()
        try:
            delta = _synth_check_task(task, args)
        except (ValidationError, io.ParseError) as exc:
            print(f"synth-check[{task}]: FAIL ({exc})")
            failed = True
            continue
        elapsed = time.perf_counter() - start
        status = "PASS" if delta <= 1e-12 else "FAIL"
        if status == "FAIL":
            failed = True
        print(f"synth-check[{task}]: {status} oracle-delta {delta} ({elapsed:.1f}s)")
    return 1 if failed else 0


# ---------------------------------------------------------------------------

_COMMANDS = {
    "degrade": cmd_degrade,
    "score": cmd_score,
    "validate-labels": cmd_validate_labels,
    "characterize": cmd_characterize,
    "evaluate": cmd_evaluate,
    "synth-check": cmd_synth_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.subcommand](args)
    except (ValidationError, io.ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
