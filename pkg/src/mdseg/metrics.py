"""Evaluation metrics: semantic, panoptic quality, instance AP, and PIQ.

PIQ (panoptic instance quality) scores thing categories by average
precision over score-ranked, possibly overlapping masks, and stuff
categories by panoptic quality, then macro-averages across categories.
It rewards models that predict correct overlapping masks, which plain
panoptic quality cannot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .maskcore import BinaryMask, LabelSpace, mask_iou
from .matching import GroundTruthSegment
from .postproc import PanopticMap

__all__ = [
    "COCO_IOU_THRESHOLDS",
    "AREA_BANDS",
    "SemanticConfusion",
    "PQStats",
    "DetectionRecord",
    "PIQReport",
    "semantic_metrics",
    "panoptic_quality",
    "instance_ap",
    "average_precision",
    "macro_piq",
    "piq_score",
    "benchmark_average",
]

COCO_IOU_THRESHOLDS = tuple(np.round(np.arange(0.50, 0.96, 0.05), 2).tolist())

# areas in pixels: small < 32^2, medium < 96^2, large otherwise
AREA_BANDS = {
    "all": (0, float("inf")),
    "small": (0, 32**2),
    "medium": (32**2, 96**2),
    "large": (96**2, float("inf")),
}


@dataclass
class SemanticConfusion:
    """(C+1) x (C+1) pixel counts; the last row/column is void/ignored."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.int64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (self.matrix < 0).any():
            raise ValueError("confusion counts must be non-negative")


def _build_confusion(pred: np.ndarray, gt: np.ndarray, space: LabelSpace) -> SemanticConfusion:
    c = space.size
    id_to_slot = {cat.id: i for i, cat in enumerate(space.categories)}
    lut_size = max(max(id_to_slot) + 1, int(pred.max(initial=0)) + 1, int(gt.max(initial=0)) + 1)
    lut = np.full(lut_size, c, dtype=np.int64)  # unknown ids -> void slot
    for cat_id, slot in id_to_slot.items():
        lut[cat_id] = slot
    p, g = lut[pred.ravel()], lut[gt.ravel()]
    mat = np.bincount(g * (c + 1) + p, minlength=(c + 1) ** 2).reshape(c + 1, c + 1)
    return SemanticConfusion(mat)


def semantic_metrics(
    pred: np.ndarray, gt: np.ndarray, space: LabelSpace
) -> dict[str, float]:
    """mIoU, fwIoU, mACC and pACC from per-pixel class-id maps.

    Pixels whose ground-truth id is outside the label space are void and
    excluded everywhere. Classes absent from both maps are excluded from
    the mIoU mean; mACC averages over classes with ground-truth pixels.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    c = space.size
    mat = _build_confusion(pred, gt, space).matrix
    valid = mat[:c, :]  # drop the void ground-truth row
    tp = np.diag(valid[:, :c]).astype(np.float64)
    gt_count = valid.sum(axis=1).astype(np.float64)
    pred_count = mat[:c, :c].sum(axis=0).astype(np.float64)

    union = gt_count + pred_count - tp
    present = union > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(present, tp / np.where(union > 0, union, 1), 0.0)
        acc = np.where(gt_count > 0, tp / np.where(gt_count > 0, gt_count, 1), 0.0)

    total = gt_count.sum()
    if total == 0:
        raise ValueError("no evaluable pixels (all ground truth is void)")
    return {
        "mIoU": float(iou[present].mean()) if present.any() else 0.0,
        "fwIoU": float((gt_count / total) @ iou),
        "mACC": float(acc[gt_count > 0].mean()) if (gt_count > 0).any() else 0.0,
        "pACC": float(tp.sum() / total),
    }


@dataclass
class PQStats:
    """Per-category panoptic matching counts."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    iou_sum: float = 0.0

    @property
    def pq(self) -> float:
        denom = self.tp + 0.5 * self.fp + 0.5 * self.fn
        return self.iou_sum / denom if denom > 0 else 0.0

    @property
    def sq(self) -> float:
        return self.iou_sum / self.tp if self.tp > 0 else 0.0

    @property
    def rq(self) -> float:
        denom = self.tp + 0.5 * self.fp + 0.5 * self.fn
        return self.tp / denom if denom > 0 else 0.0

    def merge(self, other: "PQStats") -> "PQStats":
        return PQStats(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.iou_sum + other.iou_sum,
        )


def panoptic_quality(
    pred: PanopticMap,
    gt: PanopticMap,
    space: LabelSpace,
    iou_threshold: float = 0.5,
) -> dict:
    """PQ/SQ/RQ per category and aggregated over evaluated categories.

    Segments match iff they share a category and their IoU (computed with
    ground-truth void pixels excluded) strictly exceeds the threshold.
    Unmatched predicted segments lying mostly over void are ignored rather
    than counted as false positives.
    """
    if pred.id_map.shape != gt.id_map.shape:
        raise ValueError("prediction and ground-truth maps differ in size")
    if iou_threshold < 0.5:
        raise ValueError("IoU match threshold below 0.5 breaks matching uniqueness")

    stats: dict[int, PQStats] = {}

    def stat(cat_id: int) -> PQStats:
        return stats.setdefault(cat_id, PQStats())

    gt_cat = {s.id: s.category.id for s in gt.segments}
    pred_cat = {s.id: s.category.id for s in pred.segments}
    gt_area = {s.id: s.area for s in gt.segments}
    pred_area = {s.id: s.area for s in pred.segments}

    offset = int(pred.id_map.max()) + 2
    combo = gt.id_map.astype(np.int64) * offset + pred.id_map.astype(np.int64)
    pairs, counts = np.unique(combo, return_counts=True)
    inter: dict[tuple[int, int], int] = {}
    for pair, count in zip(pairs.tolist(), counts.tolist()):
        inter[(pair // offset, pair % offset)] = count

    matched_gt: set[int] = set()
    matched_pred: set[int] = set()
    for (gid, pid), n in inter.items():
        if gid == 0 or pid == 0:
            continue
        if gt_cat[gid] != pred_cat[pid]:
            continue
        void_overlap = inter.get((0, pid), 0)
        union = gt_area[gid] + pred_area[pid] - n - void_overlap
        iou = n / union if union > 0 else 0.0
        if iou > iou_threshold:
            s = stat(gt_cat[gid])
            s.tp += 1
            s.iou_sum += iou
            matched_gt.add(gid)
            matched_pred.add(pid)

    for gid, cat_id in gt_cat.items():
        if gid not in matched_gt:
            stat(cat_id).fn += 1
    for pid, cat_id in pred_cat.items():
        if pid in matched_pred:
            continue
        if inter.get((0, pid), 0) / pred_area[pid] > 0.5:
            continue  # mostly over void: ignored, not a false positive
        stat(cat_id).fp += 1

    evaluated = {cid: s for cid, s in stats.items() if s.tp + s.fp + s.fn > 0}
    n = len(evaluated)
    return {
        "per_category": evaluated,
        "PQ": sum(s.pq for s in evaluated.values()) / n if n else 0.0,
        "SQ": sum(s.sq for s in evaluated.values()) / n if n else 0.0,
        "RQ": sum(s.rq for s in evaluated.values()) / n if n else 0.0,
        "n_categories": n,
    }


@dataclass
class DetectionRecord:
    """One scored instance mask prediction."""

    category_id: int
    score: float
    mask: BinaryMask

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")


def _ap_101(recalls: np.ndarray, precisions: np.ndarray) -> float:
    """101-point interpolated average precision from a ranked PR sequence."""
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 101):
        mask = recalls >= r - 1e-12
        ap += float(precisions[mask].max()) if mask.any() else 0.0
    return ap / 101.0


def _category_ap(
    dets: list[DetectionRecord],
    gts: list[GroundTruthSegment],
    threshold: float,
    area_band: tuple[float, float],
) -> float | None:
    """AP for one category at one IoU threshold, or None when no usable GT.

    Ground truth outside the area band is "ignored": detections matching it
    do not count either way, and unmatched detections outside the band are
    dropped rather than counted as false positives.
    """
    lo, hi = area_band
    ignored = [not (lo <= g.mask.area < hi) for g in gts]
    n_usable = sum(1 for ig in ignored if not ig)
    if n_usable == 0:
        return None

    ranked = sorted(enumerate(dets), key=lambda t: (-t[1].score, t[0]))
    iou = np.array(
        [[mask_iou(d.mask, g.mask) for g in gts] for _, d in ranked]
    ).reshape(len(ranked), len(gts))

    gt_taken = [False] * len(gts)
    flags: list[int] = []  # 1 = TP, 0 = FP; ignored detections omitted
    for row, (_, det) in enumerate(ranked):
        best_j, best_iou = -1, threshold
        for j in range(len(gts)):
            if gt_taken[j] or ignored[j]:
                continue
            if iou[row, j] >= best_iou:
                best_iou, best_j = iou[row, j], j
        if best_j >= 0:
            gt_taken[best_j] = True
            flags.append(1)
            continue
        # fall back to an ignored ground truth, or drop out-of-band detections
        hit_ignored = any(
            ignored[j] and not gt_taken[j] and iou[row, j] >= threshold
            for j in range(len(gts))
        )
        if hit_ignored or not (lo <= det.mask.area < hi):
            continue
        flags.append(0)

    if not flags:
        return 0.0
    tp = np.cumsum(flags)
    fp = np.cumsum([1 - f for f in flags])
    recalls = tp / n_usable
    precisions = tp / (tp + fp)
    return _ap_101(recalls, precisions)


def average_precision(
    dets: list[DetectionRecord],
    gts: list[GroundTruthSegment],
    thresholds: tuple[float, ...] = COCO_IOU_THRESHOLDS,
    area_band: tuple[float, float] = AREA_BANDS["all"],
) -> float | None:
    """Mean AP over IoU thresholds and categories present in ground truth."""
    by_cat_gt: dict[int, list[GroundTruthSegment]] = {}
    for g in gts:
        by_cat_gt.setdefault(g.category.id, []).append(g)
    by_cat_det: dict[int, list[DetectionRecord]] = {}
    for d in dets:
        by_cat_det.setdefault(d.category_id, []).append(d)

    per_cat: list[float] = []
    for cat_id, cat_gts in by_cat_gt.items():
        vals = [
            _category_ap(by_cat_det.get(cat_id, []), cat_gts, t, area_band)
            for t in thresholds
        ]
        vals = [v for v in vals if v is not None]
        if vals:
            per_cat.append(sum(vals) / len(vals))
    if not per_cat:
        return None
    return sum(per_cat) / len(per_cat)


def instance_ap(
    dets: list[DetectionRecord],
    gts: list[GroundTruthSegment],
    thresholds: tuple[float, ...] = COCO_IOU_THRESHOLDS,
) -> dict[str, float]:
    """The COCO-style AP bundle: AP, AP50, AP75 and size-stratified APs."""

    def ap(ts, band):
        v = average_precision(dets, gts, ts, band)
        return 0.0 if v is None else v

    return {
        "AP": ap(thresholds, AREA_BANDS["all"]),
        "AP50": ap((0.50,), AREA_BANDS["all"]),
        "AP75": ap((0.75,), AREA_BANDS["all"]),
        "AP_s": ap(thresholds, AREA_BANDS["small"]),
        "AP_m": ap(thresholds, AREA_BANDS["medium"]),
        "AP_l": ap(thresholds, AREA_BANDS["large"]),
    }


@dataclass(frozen=True)
class PIQReport:
    piq: float
    piq50: float
    piq75: float
    piq_s: float
    piq_m: float
    piq_l: float
    # alternate aggregation readings, keyed by name
    alternates: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("piq", "piq50", "piq75", "piq_s", "piq_m", "piq_l"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0 + 1e-9:
                raise ValueError(f"{name} must be in [0, 100], got {v}")


def macro_piq(category_scores: dict[int, float]) -> float:
    """Macro-average per-category scores (AP for things, PQ for stuff) x 100."""
    if not category_scores:
        return 0.0
    return 100.0 * sum(category_scores.values()) / len(category_scores)


def _gt_thing_instances(gt: PanopticMap, space: LabelSpace) -> list[GroundTruthSegment]:
    out = []
    for seg in gt.segments:
        if seg.category.is_thing:
            out.append(GroundTruthSegment(seg.category, gt.segment_mask(seg.id)))
    return out


def _restrict_gt_by_area(gt: PanopticMap, band: tuple[float, float]) -> PanopticMap:
    lo, hi = band
    keep = [s for s in gt.segments if lo <= s.area < hi]
    keep_ids = np.array([s.id for s in keep], dtype=np.int32)
    id_map = np.where(np.isin(gt.id_map, keep_ids), gt.id_map, 0)
    from dataclasses import replace

    return PanopticMap(id_map, [replace(s) for s in keep])


def piq_score(
    thing_dets: list[DetectionRecord],
    stuff_preds: PanopticMap,
    gt: PanopticMap,
    space: LabelSpace,
) -> PIQReport:
    """Panoptic instance quality over a thing/stuff-partitioned label space.

    Thing categories are scored by AP against the ground-truth thing
    instances (raw overlapping detections, no fusion required); stuff
    categories by PQ between the stuff-restricted maps. The headline
    number macro-averages the per-category scores; PIQ50/75 pin the IoU
    threshold of both components to a single value.
    """
    thing_gts = _gt_thing_instances(gt, space)
    gt_stuff = gt.restricted_to_stuff()
    stuff_space_ids = {c.id for c in space.categories if not c.is_thing}
    thing_space_ids = {c.id for c in space.categories if c.is_thing}

    unknown = {s.category.id for s in gt.segments} - stuff_space_ids - thing_space_ids
    if unknown:
        raise ValueError(f"categories {sorted(unknown)} not assigned thing/stuff")

    def category_scores(
        thresholds: tuple[float, ...],
        pq_threshold: float,
        band: tuple[float, float],
    ) -> dict[int, float]:
        scores: dict[int, float] = {}
        by_cat: dict[int, list[GroundTruthSegment]] = {}
        for g in thing_gts:
            by_cat.setdefault(g.category.id, []).append(g)
        for cat_id, cat_gts in by_cat.items():
            cat_dets = [d for d in thing_dets if d.category_id == cat_id]
            vals = [
                _category_ap(cat_dets, cat_gts, t, band) for t in thresholds
            ]
            vals = [v for v in vals if v is not None]
            if vals:
                scores[cat_id] = sum(vals) / len(vals)
        pq = panoptic_quality(
            stuff_preds, _restrict_gt_by_area(gt_stuff, band), space, pq_threshold
        )
        for cat_id, s in pq["per_category"].items():
            scores[cat_id] = s.pq
        return scores

    full = AREA_BANDS["all"]
    main = category_scores(COCO_IOU_THRESHOLDS, 0.5, full)

    # alternate reading: mean of (mean thing AP, mean stuff PQ)
    thing_vals = [v for k, v in main.items() if k in thing_space_ids]
    stuff_vals = [v for k, v in main.items() if k in stuff_space_ids]
    group_means = [
        100.0 * sum(v) / len(v) for v in (thing_vals, stuff_vals) if v
    ]
    alternates = {
        "piq_grouped": sum(group_means) / len(group_means) if group_means else 0.0
    }

    return PIQReport(
        piq=macro_piq(main),
        piq50=macro_piq(category_scores((0.50,), 0.5, full)),
        piq75=macro_piq(category_scores((0.75,), 0.75, full)),
        piq_s=macro_piq(category_scores(COCO_IOU_THRESHOLDS, 0.5, AREA_BANDS["small"])),
        piq_m=macro_piq(category_scores(COCO_IOU_THRESHOLDS, 0.5, AREA_BANDS["medium"])),
        piq_l=macro_piq(category_scores(COCO_IOU_THRESHOLDS, 0.5, AREA_BANDS["large"])),
        alternates=alternates,
    )


def benchmark_average(values: list[float]) -> float:
    """Unweighted mean of one metric over a benchmark's sub-datasets."""
    if not values:
        raise ValueError("cannot average an empty report list")
    return sum(values) / len(values)
