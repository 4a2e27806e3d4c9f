"""Panoptic fusion: turning scored, possibly overlapping masks into a map.

Two algorithms are provided. The original greedy fusion paints masks in
descending score order onto unassigned pixels, dropping masks that are
mostly hidden. The overlap-aware variant changes the score filter to
ignore the background slot, removes near-duplicates with a mask-level NMS
pass, and allows a mask fully contained (with slack) in a single placed
segment to be painted on top of it, so small objects inside larger ones
survive.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .maskcore import BinaryMask, LabelSpace, SegCategory, binarize_soft_mask
from .semantics import Prediction

__all__ = [
    "ScoredMask",
    "SegmentInfo",
    "PanopticMap",
    "FusionConfig",
    "score_and_label",
    "mask_nms",
    "original_fusion",
    "esf_omi_fusion",
    "fuse_predictions",
]


@dataclass(frozen=True)
class ScoredMask:
    mask: BinaryMask
    label: SegCategory
    score: float
    is_background: bool = False

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@dataclass
class SegmentInfo:
    id: int
    category: SegCategory
    area: int
    is_instance: bool


@dataclass
class PanopticMap:
    """Per-pixel segment ids (0 = void) plus the segment table."""

    id_map: np.ndarray
    segments: list[SegmentInfo]

    def __post_init__(self):
        self.id_map = np.asarray(self.id_map, dtype=np.int32)
        if self.id_map.ndim != 2:
            raise ValueError("id_map must be 2-D")
        known = {s.id for s in self.segments}
        present = set(np.unique(self.id_map).tolist()) - {0}
        if not present <= known:
            raise ValueError(f"ids {sorted(present - known)} missing from segment table")
        for s in self.segments:
            actual = int(np.count_nonzero(self.id_map == s.id))
            if actual != s.area:
                raise ValueError(f"segment {s.id} area {s.area} != pixel count {actual}")

    @property
    def height(self) -> int:
        return self.id_map.shape[0]

    @property
    def width(self) -> int:
        return self.id_map.shape[1]

    def segment_mask(self, segment_id: int) -> BinaryMask:
        return BinaryMask.from_dense(self.id_map == segment_id)

    def restricted_to_stuff(self) -> "PanopticMap":
        """Copy with thing segments removed (their pixels become void)."""
        keep = [s for s in self.segments if not s.category.is_thing]
        keep_ids = np.array([s.id for s in keep], dtype=np.int32)
        mask = np.isin(self.id_map, keep_ids)
        return PanopticMap(np.where(mask, self.id_map, 0), [replace(s) for s in keep])


@dataclass(frozen=True)
class FusionConfig:
    score_threshold: float = 0.5
    nms_iou_threshold: float = 0.8
    containment_slack: float = 0.1
    min_visible_ratio: float = 0.8
    binarize_threshold: float = 0.5

    # the original algorithm's filter is stricter; kept separate so the two
    # algorithms can share one config object
    original_score_threshold: float = 0.8

    def __post_init__(self):
        for name in (
            "score_threshold",
            "nms_iou_threshold",
            "containment_slack",
            "min_visible_ratio",
            "binarize_threshold",
            "original_score_threshold",
        ):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {v}")


def score_and_label(
    pred: Prediction,
    space: LabelSpace,
    binarize_threshold: float = 0.5,
    exclude_background: bool = False,
) -> ScoredMask:
    """Reduce a classified prediction to a single (mask, label, score) triple.

    With exclude_background=True the no-object slot is ignored, so a mask
    whose distribution peaks on background still gets its best real class;
    this is the scoring the overlap-aware fusion expects.
    """
    if pred.class_probs is None:
        raise ValueError("prediction has no class probabilities")
    probs = pred.class_probs
    if len(probs) != space.size + 1:
        raise ValueError(
            f"distribution length {len(probs)} does not match label space size {space.size}+1"
        )
    if exclude_background:
        best = int(np.argmax(probs[:-1]))
        return ScoredMask(
            mask=binarize_soft_mask(pred.soft_mask, binarize_threshold),
            label=space.categories[best],
            score=float(probs[best]),
            is_background=False,
        )
    best = int(np.argmax(probs))
    is_bg = best == space.size
    label = space.categories[0] if is_bg else space.categories[best]
    return ScoredMask(
        mask=binarize_soft_mask(pred.soft_mask, binarize_threshold),
        label=label,
        score=float(probs[best]),
        is_background=is_bg,
    )


def _placement_order(masks: list[ScoredMask]) -> list[ScoredMask]:
    # descending score, then larger area, then original input position
    return [
        m
        for _, _, _, m in sorted(
            ((-m.score, -m.mask.area, i, m) for i, m in enumerate(masks)),
            key=lambda t: t[:3],
        )
    ]


def mask_nms(masks: list[ScoredMask], iou_threshold: float) -> list[ScoredMask]:
    """Greedy descending-score suppression of near-duplicate masks."""
    kept: list[ScoredMask] = []
    kept_dense: list[np.ndarray] = []
    kept_areas: list[int] = []
    for m in _placement_order(masks):
        dense = m.mask.to_dense()
        area = int(dense.sum())
        duplicate = False
        for other, other_area in zip(kept_dense, kept_areas):
            inter = int(np.count_nonzero(dense & other))
            union = area + other_area - inter
            if union > 0 and inter / union > iou_threshold:
                duplicate = True
                break
        if not duplicate:
            kept.append(m)
            kept_dense.append(dense)
            kept_areas.append(area)
    return kept


class _MapBuilder:
    """Greedy painter shared by both fusion algorithms."""

    def __init__(self, height: int, width: int):
        self.id_map = np.zeros((height, width), dtype=np.int32)
        self.segments: list[SegmentInfo] = []
        self._stuff_ids: dict[int, int] = {}
        self._next_id = 1

    def paint(self, pixels: np.ndarray, label: SegCategory) -> None:
        count = int(np.count_nonzero(pixels))
        if count == 0:
            return
        # overwritten pixels shrink their previous owners
        for prev in np.unique(self.id_map[pixels]):
            if prev == 0:
                continue
            seg = self._segment(int(prev))
            seg.area -= int(np.count_nonzero(pixels & (self.id_map == prev)))
        if not label.is_thing and label.id in self._stuff_ids:
            sid = self._stuff_ids[label.id]
            self._segment(sid).area += count
        else:
            sid = self._next_id
            self._next_id += 1
            self.segments.append(SegmentInfo(sid, label, count, label.is_thing))
            if not label.is_thing:
                self._stuff_ids[label.id] = sid
        self.id_map[pixels] = sid

    def _segment(self, sid: int) -> SegmentInfo:
        for s in self.segments:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def finish(self) -> PanopticMap:
        live = [s for s in self.segments if s.area > 0]
        remap = np.zeros(self._next_id, dtype=np.int32)
        for new_id, s in enumerate(live, start=1):
            remap[s.id] = new_id
            s.id = new_id
        dead = np.isin(self.id_map, [s.id for s in self.segments if s.area <= 0])
        self.id_map[dead] = 0
        return PanopticMap(remap[self.id_map], live)


def _check_dims(masks: list[ScoredMask]) -> tuple[int, int]:
    dims = {(m.mask.height, m.mask.width) for m in masks}
    if len(dims) > 1:
        raise ValueError(f"masks disagree on dimensions: {sorted(dims)}")
    return next(iter(dims))


def original_fusion(masks: list[ScoredMask], cfg: FusionConfig) -> PanopticMap:
    """Greedy fusion: confident masks claim still-unassigned pixels only."""
    if not masks:
        raise ValueError("no masks to fuse")
    h, w = _check_dims(masks)
    kept = [
        m for m in masks if not m.is_background and m.score >= cfg.original_score_threshold
    ]
    builder = _MapBuilder(h, w)
    for m in _placement_order(kept):
        dense = m.mask.to_dense()
        area = int(dense.sum())
        if area == 0:
            continue
        visible = dense & (builder.id_map == 0)
        visible_area = int(visible.sum())
        if visible_area > 0 and visible_area / area >= cfg.min_visible_ratio:
            builder.paint(visible, m.label)
    return builder.finish()


def esf_omi_fusion(masks: list[ScoredMask], cfg: FusionConfig) -> PanopticMap:
    """Overlap-aware fusion with mask-NMS and valid selective overlap.

    Input masks are expected to be scored with the background slot excluded
    (see score_and_label); the filter here only compares scores against the
    threshold. A mask failing the visible-ratio test is still placed when
    it is contained, up to the configured slack, in exactly one already
    placed segment, overwriting that segment's pixels.
    """
    if not masks:
        raise ValueError("no masks to fuse")
    h, w = _check_dims(masks)
    kept = [m for m in masks if not m.is_background and m.score >= cfg.score_threshold]
    kept = mask_nms(kept, cfg.nms_iou_threshold)
    builder = _MapBuilder(h, w)
    for m in kept:  # mask_nms output is already in placement order
        dense = m.mask.to_dense()
        area = int(dense.sum())
        if area == 0:
            continue
        visible = dense & (builder.id_map == 0)
        visible_area = int(visible.sum())
        if visible_area > 0 and visible_area / area >= cfg.min_visible_ratio:
            builder.paint(visible, m.label)
            continue
        host = _containing_segment(dense, area, builder, cfg.containment_slack)
        if host is not None:
            # overwrite only the host's pixels (plus any void ones)
            paintable = dense & ((builder.id_map == host) | (builder.id_map == 0))
            builder.paint(paintable, m.label)
    return builder.finish()


def _containing_segment(
    dense: np.ndarray, area: int, builder: _MapBuilder, slack: float
) -> int | None:
    for seg in builder.segments:
        if seg.area <= 0:
            continue
        inter = int(np.count_nonzero(dense & (builder.id_map == seg.id)))
        if inter / area >= 1.0 - slack:
            return seg.id
    return None


def fuse_predictions(
    preds: list[Prediction],
    space: LabelSpace,
    cfg: FusionConfig,
    algorithm: str = "esf-omi",
) -> PanopticMap:
    """Score, label, and fuse classified predictions in one step."""
    if algorithm == "esf-omi":
        scored = [
            score_and_label(p, space, cfg.binarize_threshold, exclude_background=True)
            for p in preds
        ]
        return esf_omi_fusion(scored, cfg)
    if algorithm == "original":
        scored = [score_and_label(p, space, cfg.binarize_threshold) for p in preds]
        return original_fusion(scored, cfg)
    raise ValueError(f"unknown fusion algorithm {algorithm!r}")
