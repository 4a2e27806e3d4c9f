"""Command-line entry points tying the library into reproducible runs.

Exit codes: 0 success, 1 data error, 2 usage error. Reports are printed as
"name value" lines with 4 decimals; --report-out additionally writes the
same values as JSON.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import benchgen, formats, matching, metrics, postproc, semantics
from .maskcore import LabelSpace
from .postproc import FusionConfig, PanopticMap

FUSION_FLAG_FIELDS = {
    "score_threshold": "score_threshold",
    "nms_iou": "nms_iou_threshold",
    "slack": "containment_slack",
    "min_visible_ratio": "min_visible_ratio",
    "binarize_threshold": "binarize_threshold",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdseg", description="multi-dataset segmentation toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_fusion_flags(p):
        p.add_argument("--score-threshold", type=float, default=None)
        p.add_argument("--nms-iou", type=float, default=None)
        p.add_argument("--slack", type=float, default=None)
        p.add_argument("--min-visible-ratio", type=float, default=None)
        p.add_argument("--binarize-threshold", type=float, default=None)
        p.add_argument("--config", type=Path, default=None, help="JSON config file")

    ev = sub.add_parser("evaluate", help="run one evaluation task")
    ev.add_argument("--task", required=True, choices=["semantic", "panoptic", "instance", "piq"])
    ev.add_argument("--gt-json", type=Path, required=True)
    ev.add_argument("--gt-dir", type=Path, required=True)
    ev.add_argument("--pred-json", type=Path, help="predicted panoptic dataset JSON")
    ev.add_argument("--pred-dir", type=Path, help="predicted panoptic PNG directory")
    ev.add_argument("--predictions", type=Path, help="raw prediction file (instance/piq)")
    ev.add_argument("--jobs", type=int, default=1)
    ev.add_argument("--report-out", type=Path, default=None)
    add_fusion_flags(ev)

    fu = sub.add_parser("fuse", help="fuse raw predictions into a panoptic dataset")
    fu.add_argument("--algorithm", choices=["original", "esf-omi"], default="esf-omi")
    fu.add_argument("--predictions", type=Path, required=True)
    fu.add_argument("--categories", type=Path, required=True,
                    help="JSON file with a 'categories' list (id/name/isthing)")
    fu.add_argument("--out-json", type=Path, required=True)
    fu.add_argument("--out-dir", type=Path, required=True)
    add_fusion_flags(fu)

    se = sub.add_parser("select-labelspaces", help="print the selected label-space set")
    se.add_argument("--test-table", type=Path, required=True)
    se.add_argument("--train-table", type=Path, action="append", required=True)

    inf = sub.add_parser("infer-sim", help="multi-pass inference with the stub decoder")
    inf.add_argument("--test-table", type=Path, required=True)
    inf.add_argument("--train-table", type=Path, action="append", required=True)
    inf.add_argument("--queries", type=int, default=8)
    inf.add_argument("--height", type=int, default=32)
    inf.add_argument("--width", type=int, default=32)
    inf.add_argument("--tau", type=float, default=semantics.DEFAULT_TAU)
    inf.add_argument("--seed", type=int, default=0)
    inf.add_argument("--out", type=Path, required=True)

    ml = sub.add_parser("match-loss", help="set loss between fixture files")
    ml.add_argument("--predictions", type=Path, required=True)
    ml.add_argument("--ground-truth", type=Path, required=True,
                    help="JSON with 'categories' and per-image 'segments' (RLE)")
    ml.add_argument("--report-out", type=Path, default=None)

    bb = sub.add_parser("build-bench", help="emit the mixed label-space benchmark fixtures")
    bb.add_argument("--out", type=Path, required=True)

    sa = sub.add_parser("sample", help="emit an equal-frequency sampler sequence")
    sa.add_argument("--sizes", required=True, help="comma-separated dataset sizes")
    sa.add_argument("--draws", type=int, required=True)
    sa.add_argument("--seed", type=int, default=0)
    sa.add_argument("--out", type=Path, default=None)

    return parser


def _fusion_config(args) -> FusionConfig:
    # precedence: flags > config file > built-in defaults
    values = {}
    if getattr(args, "config", None):
        cfg_doc = json.loads(args.config.read_text())
        for field in FUSION_FLAG_FIELDS.values():
            if field in cfg_doc:
                values[field] = float(cfg_doc[field])
    for flag, field in FUSION_FLAG_FIELDS.items():
        flag_value = getattr(args, flag, None)
        if flag_value is not None:
            values[field] = flag_value
    return FusionConfig(**values)


def _load_space(path: Path) -> LabelSpace:
    doc = json.loads(path.read_text())
    return formats._space_from_json(doc["categories"])


def _emit_report(report: dict[str, float], out: Path | None) -> None:
    for name, value in report.items():
        print(f"{name} {value:.4f}")
    if out is not None:
        out.write_text(json.dumps(report, indent=1))


def _semantic_map(pmap: PanopticMap) -> np.ndarray:
    lut = np.zeros(int(pmap.id_map.max()) + 1, dtype=np.int64)
    for s in pmap.segments:
        lut[s.id] = s.category.id
    return lut[pmap.id_map]


def _cmd_evaluate(args) -> int:
    gt_maps, space = formats.load_panoptic_dataset(args.gt_json, args.gt_dir)
    cfg = _fusion_config(args)

    if args.task in ("semantic", "panoptic"):
        if not args.pred_json or not args.pred_dir:
            raise ValueError(f"--pred-json/--pred-dir are required for task {args.task}")
        pred_maps, _ = formats.load_panoptic_dataset(args.pred_json, args.pred_dir)
        missing = set(gt_maps) - set(pred_maps)
        if missing:
            raise ValueError(f"predictions missing for images {sorted(missing)}")

    if args.task == "panoptic":
        merged: dict[int, metrics.PQStats] = {}

        def one(image_id):
            return metrics.panoptic_quality(pred_maps[image_id], gt_maps[image_id], space)

        results = _map_jobs(one, sorted(gt_maps), args.jobs)
        for res in results:
            for cid, s in res["per_category"].items():
                merged[cid] = merged.get(cid, metrics.PQStats()).merge(s)
        n = len(merged)
        report = {
            "PQ": sum(s.pq for s in merged.values()) / n if n else 0.0,
            "SQ": sum(s.sq for s in merged.values()) / n if n else 0.0,
            "RQ": sum(s.rq for s in merged.values()) / n if n else 0.0,
        }
    elif args.task == "semantic":
        mats = _map_jobs(
            lambda i: metrics._build_confusion(
                _semantic_map(pred_maps[i]), _semantic_map(gt_maps[i]), space
            ).matrix,
            sorted(gt_maps),
            args.jobs,
        )
        total = np.sum(mats, axis=0)
        # re-derive the four metrics from the pooled confusion matrix
        c = space.size
        tp = np.diag(total[:c, :c]).astype(float)
        gt_count = total[:c, :].sum(axis=1).astype(float)
        pred_count = total[:c, :c].sum(axis=0).astype(float)
        union = gt_count + pred_count - tp
        present = union > 0
        iou = np.divide(tp, union, out=np.zeros_like(tp), where=union > 0)
        acc = np.divide(tp, gt_count, out=np.zeros_like(tp), where=gt_count > 0)
        report = {
            "mIoU": float(iou[present].mean()) if present.any() else 0.0,
            "fwIoU": float((gt_count / gt_count.sum()) @ iou),
            "mACC": float(acc[gt_count > 0].mean()) if (gt_count > 0).any() else 0.0,
            "pACC": float(tp.sum() / gt_count.sum()),
        }
    elif args.task == "instance":
        dets, gts = _detections_and_gts(args, gt_maps, space, cfg)
        report = metrics.instance_ap(dets, gts)
    else:  # piq
        if not args.predictions:
            raise ValueError("--predictions is required for task piq")
        preds_by_image = formats.load_predictions(args.predictions)
        all_dets, thing_reports = [], []
        piq_values = []
        for image_id in sorted(gt_maps):
            preds = preds_by_image.get(str(image_id), preds_by_image.get(image_id, []))
            dets = _to_detections(preds, space, cfg)
            fused = postproc.fuse_predictions(preds, space, cfg, "esf-omi") if preds else PanopticMap(
                np.zeros_like(gt_maps[image_id].id_map), []
            )
            rep = metrics.piq_score(dets, fused.restricted_to_stuff(), gt_maps[image_id], space)
            piq_values.append(rep)
        report = {
            "PIQ": metrics.benchmark_average([r.piq for r in piq_values]),
            "PIQ50": metrics.benchmark_average([r.piq50 for r in piq_values]),
            "PIQ75": metrics.benchmark_average([r.piq75 for r in piq_values]),
            "PIQ_s": metrics.benchmark_average([r.piq_s for r in piq_values]),
            "PIQ_m": metrics.benchmark_average([r.piq_m for r in piq_values]),
            "PIQ_l": metrics.benchmark_average([r.piq_l for r in piq_values]),
        }

    _emit_report(report, args.report_out)
    return 0


def _map_jobs(fn, items, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _to_detections(preds, space, cfg) -> list[metrics.DetectionRecord]:
    dets = []
    for p in preds:
        scored = postproc.score_and_label(
            p, space, cfg.binarize_threshold, exclude_background=True
        )
        if scored.mask.area > 0:
            dets.append(
                metrics.DetectionRecord(scored.label.id, scored.score, scored.mask)
            )
    return dets


def _detections_and_gts(args, gt_maps, space, cfg):
    if not args.predictions:
        raise ValueError("--predictions is required for task instance")
    preds_by_image = formats.load_predictions(args.predictions)
    dets, gts = [], []
    for image_id, gt_map in sorted(gt_maps.items()):
        preds = preds_by_image.get(str(image_id), preds_by_image.get(image_id, []))
        dets.extend(_to_detections(preds, space, cfg))
        for seg in gt_map.segments:
            if seg.category.is_thing:
                gts.append(
                    matching.GroundTruthSegment(seg.category, gt_map.segment_mask(seg.id))
                )
    return dets, gts


def _cmd_fuse(args) -> int:
    cfg = _fusion_config(args)
    space = _load_space(args.categories)
    preds_by_image = formats.load_predictions(args.predictions)
    maps = {
        image_id: postproc.fuse_predictions(preds, space, cfg, args.algorithm)
        for image_id, preds in sorted(preds_by_image.items())
    }
    formats.save_panoptic_dataset(maps, space, args.out_json, args.out_dir)
    print(f"fused {len(maps)} image(s) with {args.algorithm}")
    return 0


def _cmd_select(args) -> int:
    test_table = formats.load_embedding_table(args.test_table)
    train_tables = [formats.load_embedding_table(p) for p in args.train_table]
    selected = semantics.select_label_spaces(test_table, train_tables)
    print(" ".join(str(k) for k in selected))
    return 0


def _cmd_infer_sim(args) -> int:
    test_table = formats.load_embedding_table(args.test_table)
    train_tables = [formats.load_embedding_table(p) for p in args.train_table]
    rng = np.random.default_rng(args.seed)
    d = test_table.dim
    queries = semantics.QuerySet(
        rng.standard_normal((args.queries, d)),
        rng.standard_normal((len(train_tables), d)),
    )
    decoder = semantics.StubDecoder(args.queries, args.height, args.width, args.seed)
    preds = semantics.multi_pass_inference(
        decoder, queries, image=None, test_table=test_table,
        train_tables=train_tables, tau=args.tau,
    )
    formats.save_predictions({"sim": preds}, args.out)
    print(f"wrote {len(preds)} predictions")
    return 0


def _cmd_match_loss(args) -> int:
    preds_by_image = formats.load_predictions(args.predictions)
    gt_doc = json.loads(args.ground_truth.read_text())
    space = formats._space_from_json(gt_doc["categories"])
    gts_by_image = {
        image_id: [
            matching.GroundTruthSegment(
                space.category_by_id(int(s["category_id"])),
                formats.rle_from_obj(s["mask"]),
            )
            for s in segs
        ]
        for image_id, segs in gt_doc["segments"].items()
    }
    total = cls_part = mask_part = 0.0
    for image_id, gts in gts_by_image.items():
        loss = matching.set_loss(preds_by_image[image_id], gts, space)
        total += loss.total
        cls_part += loss.classification_part
        mask_part += loss.mask_part
    _emit_report(
        {"total": total, "classification": cls_part, "mask": mask_part},
        args.report_out,
    )
    return 0


def _cmd_build_bench(args) -> int:
    doc = benchgen.builtin_benchmark_labelspaces()
    args.out.write_text(json.dumps(doc, indent=1))
    counts = {k: len(v) for k, v in doc.items()}
    print(" ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    return 0


def _cmd_sample(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    seq = benchgen.equal_frequency_sampler(sizes, args.draws, args.seed)
    text = " ".join(str(i) for i in seq.tolist())
    if args.out is not None:
        args.out.write_text(text + "\n")
    else:
        print(text)
    return 0


_COMMANDS = {
    "evaluate": _cmd_evaluate,
    "fuse": _cmd_fuse,
    "select-labelspaces": _cmd_select,
    "infer-sim": _cmd_infer_sim,
    "match-loss": _cmd_match_loss,
    "build-bench": _cmd_build_bench,
    "sample": _cmd_sample,
}


def run_command(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if os.environ.get("MDSEG_VERBOSE"):
            raise
        return 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
