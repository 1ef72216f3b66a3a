"""Command line interface: ingest, infer, eval, render."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .annotations import load_index, parse_dataset, save_index
from .evaluation import ap_range, iou_thresholds, predictions_from_records
from .fusion import PipelineConfig, read_cascade_weights, read_logits, read_score_map
from .imageops import load_image
from .pipeline import MODES, cascade_score, infer_image
from .render import (
    overlay,
    read_label_png,
    superpixel_boundaries,
    write_gray_png,
    write_label_png,
    write_rgb_png,
)

logger = logging.getLogger("kpseg")

MANIFEST_FORMAT = "kpseg-manifest"
RESULTS_FORMAT_NOTE = "list of {image_id, category_id, segmentation, score} records"
REPORT_FORMAT = "kpseg-report"


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# ingest


def cmd_ingest(args) -> int:
    try:
        seg_doc = json.loads(Path(args.segmentation).read_text())
        kp_doc = json.loads(Path(args.keypoints).read_text())
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON: {exc}", file=sys.stderr)
        return 2
    index = parse_dataset(seg_doc, kp_doc, keep_invisible=not args.drop_invisible)
    save_index(index, args.out)
    print(f"{index.image_count} images, {index.instance_count} instances")
    return 0


# ---------------------------------------------------------------------------
# infer


def _image_stem(file_name: str) -> str:
    return Path(file_name).stem


def _infer_one(task: dict) -> dict:
    """Worker for one image; returns records plus bookkeeping for the manifest."""
    started = time.perf_counter()
    out = {"image_id": task["image"].image_id, "status": "ok", "records": [], "diagnostics": []}
    try:
        image = load_image(task["image_path"])
        h, w = image.shape[:2]
        if (h, w) != (task["image"].height, task["image"].width):
            raise ValueError(
                f"raster is {w}x{h} but the index says "
                f"{task['image'].width}x{task['image'].height}"
            )
        if task["logits_path"] is not None:
            logits = read_logits(task["logits_path"])
            if logits.shape[:2] != (h, w):
                raise ValueError(f"logits {logits.shape[:2]} do not match raster {(h, w)}")
            score = cascade_score(
                logits, task["instances"], task["cascade_weights"], task["config"].sigma
            )
        elif task["score_path"] is not None:
            score = read_score_map(task["score_path"])
            if score.shape != (h, w):
                raise ValueError(f"score map {score.shape} does not match raster {(h, w)}")
        else:
            score = None  # grid-dt runs on the pure prior
        result = infer_image(
            image, task["instances"], score, task["skeleton"], task["config"], task["mode"]
        )
        write_label_png(task["label_path"], result.labeling)
        if task["debug_dir"] is not None:
            _write_debug(Path(task["debug_dir"]), _image_stem(task["image"].file_name), image, result)
        out["records"] = result.records
        out["diagnostics"] = result.diagnostics
    except Exception as exc:  # per-image isolation: one bad image must not kill the run
        out["status"] = "error"
        out["error"] = str(exc)
    out["seconds"] = time.perf_counter() - started
    return out


def _write_debug(debug_dir, stem, image, result):
    debug_dir.mkdir(parents=True, exist_ok=True)
    if result.superpixels is not None:
        write_rgb_png(debug_dir / f"{stem}_superpixels.png", superpixel_boundaries(image, result.superpixels))
    if result.prior is not None:
        for i in range(result.prior.shape[2]):
            write_gray_png(debug_dir / f"{stem}_prior_{i + 1}.png", result.prior[:, :, i])
    write_rgb_png(debug_dir / f"{stem}_argmax.png", overlay(image, result.labeling))


def cmd_infer(args) -> int:
    try:
        index = load_index(args.index)
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return 2
    config = PipelineConfig(
        tau=args.tau,
        epsilon=args.epsilon,
        theta_bg=args.theta_bg,
        sigma=args.sigma,
        superpixels=args.superpixels,
        compactness=args.compactness,
        fw_cap=args.fw_cap,
    )
    cascade = read_cascade_weights(args.cascade_weights) if args.cascade_weights else None

    images_dir = Path(args.images)
    scores_dir = Path(args.scores) if args.scores else None
    out_dir = Path(args.out)
    labels_dir = out_dir / "labels"
    labels_dir.mkdir(parents=True, exist_ok=True)

    tasks = []
    for image in index.images:
        score_path = None
        logits_path = None
        if cascade is not None:
            logits_path = scores_dir / f"{image.image_id}.p2lf" if scores_dir else None
        elif scores_dir is not None:
            candidate = scores_dir / f"{image.image_id}.p2if"
            score_path = candidate if candidate.exists() or args.mode != "grid-dt" else None
        tasks.append(
            {
                "image": image,
                "instances": index.instances_for(image.image_id),
                "skeleton": index.skeleton,
                "config": config,
                "mode": args.mode,
                "image_path": str(images_dir / image.file_name),
                "score_path": str(score_path) if score_path else None,
                "logits_path": str(logits_path) if logits_path else None,
                "cascade_weights": cascade,
                "label_path": str(labels_dir / f"{_image_stem(image.file_name)}.png"),
                "debug_dir": str(out_dir / "debug") if args.debug else None,
            }
        )

    started = time.perf_counter()
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_infer_one, tasks))
    else:
        outcomes = [_infer_one(t) for t in tasks]
    outcomes.sort(key=lambda o: o["image_id"])

    records = []
    manifest_images = []
    failures = 0
    for outcome in outcomes:
        if outcome["status"] == "ok":
            records.extend(outcome["records"])
        else:
            failures += 1
            logger.error("image %d failed: %s", outcome["image_id"], outcome["error"])
        entry = {
            "image_id": outcome["image_id"],
            "status": outcome["status"],
            "seconds": outcome["seconds"],
            "diagnostics": outcome["diagnostics"],
        }
        if outcome["status"] == "error":
            entry["error"] = outcome["error"]
        manifest_images.append(entry)
        for message in outcome["diagnostics"]:
            logger.warning("image %d: %s", outcome["image_id"], message)

    _write_json(out_dir / "results.json", records)
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "tool_version": __version__,
        "mode": args.mode,
        "results_format": RESULTS_FORMAT_NOTE,
        "config": {
            "tau": config.tau,
            "epsilon": config.epsilon,
            "theta_bg": config.theta_bg,
            "sigma": config.sigma,
            "superpixels": config.superpixels,
            "compactness": config.compactness,
            "fw_cap": config.fw_cap,
            "cascade_weights": args.cascade_weights,
            "jobs": args.jobs,
        },
        "inputs": {
            "index": str(args.index),
            "images": str(args.images),
            "scores": str(args.scores) if args.scores else None,
        },
        "images": manifest_images,
        "elapsed_seconds": time.perf_counter() - started,
    }
    _write_json(out_dir / "manifest.json", manifest)
    print(f"{len(records)} instances across {len(tasks) - failures} images -> {out_dir}")
    if failures and failures == len(tasks):
        print("error: every image failed", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    try:
        index = load_index(args.index)
        records = json.loads(Path(args.results).read_text())
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return 2
    sizes = {im.image_id: (im.width, im.height) for im in index.images}
    try:
        predictions = predictions_from_records(records, sizes)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    ground_truth = {
        im.image_id: [inst.mask() for inst in index.instances_for(im.image_id)]
        for im in index.images
    }
    thresholds = iou_thresholds(args.iou_max)
    report = ap_range(predictions, ground_truth, thresholds)

    low, high = thresholds[0], thresholds[-1]
    print(f"AP @ IoU={low:.2f}            {report.ap_50:.4f}")
    print(f"AP @ IoU=[{low:.2f}:{high:.2f}]     {report.ap_range:.4f}")
    for t in thresholds:
        print(f"  IoU={t:.2f}  AP={report.ap_by_threshold[t]:.4f}")

    if args.out:
        _write_json(
            Path(args.out),
            {
                "format": REPORT_FORMAT,
                "version": 1,
                "iou_thresholds": thresholds,
                "ap_by_threshold": {f"{t:.2f}": report.ap_by_threshold[t] for t in thresholds},
                "ap_50": report.ap_50,
                "ap_range": report.ap_range,
            },
        )
    return 0


# ---------------------------------------------------------------------------
# render


def cmd_render(args) -> int:
    labels_dir = Path(args.labels)
    images_dir = Path(args.images)
    out_dir = Path(args.out)
    label_files = sorted(labels_dir.glob("*.png"))
    if not label_files:
        print(f"error: no label PNGs under {labels_dir}", file=sys.stderr)
        return 2
    out_dir.mkdir(parents=True, exist_ok=True)
    rendered = 0
    for label_path in label_files:
        matches = sorted(images_dir.glob(f"{label_path.stem}.*"))
        if not matches:
            logger.warning("no raster for %s; skipped", label_path.stem)
            continue
        image = load_image(matches[0])
        labeling = read_label_png(label_path)
        write_rgb_png(out_dir / f"{label_path.stem}.png", overlay(image, labeling))
        rendered += 1
    print(f"{rendered} overlays -> {out_dir}")
    return 0 if rendered else 1


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kpseg",
        description="Keypoint-prior person instance segmentation and evaluation",
    )
    parser.add_argument("--version", action="version", version=f"kpseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="intersect annotation documents into an index")
    p_ingest.add_argument("segmentation", help="instance segmentation JSON document")
    p_ingest.add_argument("keypoints", help="person keypoints JSON document")
    p_ingest.add_argument("--out", required=True, help="index file to write")
    p_ingest.add_argument(
        "--drop-invisible",
        action="store_true",
        help="drop instances whose 17 joints are all unlabeled (default: retain)",
    )
    p_ingest.set_defaults(func=cmd_ingest)

    p_infer = sub.add_parser("infer", help="run instance segmentation over an index")
    p_infer.add_argument("--index", required=True)
    p_infer.add_argument("--images", required=True, help="directory of image rasters")
    p_infer.add_argument("--scores", help="directory of <image_id>.p2if score maps")
    p_infer.add_argument("--mode", choices=MODES, default="keypoints")
    p_infer.add_argument("--out", required=True, help="output directory")
    p_infer.add_argument("--tau", type=float, default=0.25, help="softmax temperature")
    p_infer.add_argument("--theta-bg", type=float, default=0.5, help="background threshold")
    p_infer.add_argument("--epsilon", type=float, default=1e-3, help="edge weight floor")
    p_infer.add_argument("--superpixels", type=int, default=1000, help="SLIC target count")
    p_infer.add_argument("--compactness", type=float, default=10.0, help="SLIC compactness")
    p_infer.add_argument("--sigma", type=float, default=3.0, help="keypoint heatmap spread")
    p_infer.add_argument("--fw-cap", type=int, default=2000, help="all-pairs node cap")
    p_infer.add_argument("--jobs", type=int, default=1, help="parallel image workers")
    p_infer.add_argument(
        "--cascade-weights",
        help="18-value weights file; score maps are then derived from <image_id>.p2lf logits",
    )
    p_infer.add_argument("--debug", action="store_true", help="emit debug PNGs per image")
    p_infer.set_defaults(func=cmd_infer)

    p_eval = sub.add_parser("eval", help="score a results document against an index")
    p_eval.add_argument("--results", required=True)
    p_eval.add_argument("--index", required=True)
    p_eval.add_argument(
        "--iou-max",
        type=float,
        choices=(0.9, 0.95),
        default=0.95,
        help="top of the IoU threshold ladder",
    )
    p_eval.add_argument("--out", help="report JSON to write")
    p_eval.set_defaults(func=cmd_eval)

    p_render = sub.add_parser("render", help="overlay label maps onto their images")
    p_render.add_argument("--labels", required=True, help="directory of label PNGs")
    p_render.add_argument("--images", required=True)
    p_render.add_argument("--out", required=True)
    p_render.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
