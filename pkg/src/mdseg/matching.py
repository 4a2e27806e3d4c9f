"""Set-based matching between predictions and ground truth, and the set loss.

The loss over a set of N predictions is the sum of a classification
cross-entropy term for every prediction and a per-pixel binary
cross-entropy mask term for matched predictions only; unmatched
predictions are supervised toward the no-object class and their masks are
left unconstrained. Matching is the cost-minimizing injective assignment
of ground-truth segments to predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .maskcore import BinaryMask, LabelSpace, SegCategory
from .semantics import Prediction

__all__ = [
    "CLAMP_EPS",
    "GroundTruthSegment",
    "Assignment",
    "LossBreakdown",
    "pair_cost",
    "hungarian_assign",
    "set_loss",
]

# keeps logs finite on hard 0/1 probabilities
CLAMP_EPS = 1e-7


@dataclass(frozen=True)
class GroundTruthSegment:
    category: SegCategory
    mask: BinaryMask

    def __post_init__(self):
        if self.mask.area == 0:
            raise ValueError("ground-truth mask must be non-empty")


@dataclass(frozen=True)
class Assignment:
    """Injective map from ground-truth index to prediction index."""

    pairs: dict[int, int]
    unmatched_predictions: frozenset[int]

    def __post_init__(self):
        if len(set(self.pairs.values())) != len(self.pairs):
            raise ValueError("assignment must be injective")


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    classification_part: float
    mask_part: float

    def __post_init__(self):
        if abs(self.total - (self.classification_part + self.mask_part)) > 1e-9:
            raise ValueError("loss parts do not sum to the total")


def _clamped_log(p: np.ndarray | float) -> np.ndarray | float:
    return np.log(np.clip(p, CLAMP_EPS, 1.0 - CLAMP_EPS))


def _classification_cost(pred: Prediction, slot: int) -> float:
    if pred.class_probs is None:
        raise ValueError("prediction has no class probabilities")
    return float(-_clamped_log(pred.class_probs[slot]))


def _mask_bce(pred: Prediction, gt_mask: BinaryMask) -> float:
    m = pred.soft_mask
    if (m.height, m.width) != (gt_mask.height, gt_mask.width):
        raise ValueError("prediction and ground-truth masks differ in size")
    p = np.clip(m.values, CLAMP_EPS, 1.0 - CLAMP_EPS)
    y = gt_mask.to_dense().astype(np.float64)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def pair_cost(pred: Prediction, gt: GroundTruthSegment, space: LabelSpace) -> float:
    """Classification cross-entropy plus per-pixel mask BCE for one pairing."""
    slot = space.slot_of(gt.category)
    return _classification_cost(pred, slot) + _mask_bce(pred, gt.mask)


def hungarian_assign(cost: np.ndarray) -> Assignment:
    """Minimum-cost injective assignment for a #GT x N cost matrix."""
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    n_gt, n_pred = c.shape
    if n_gt > n_pred:
        raise ValueError(f"infeasible: {n_gt} ground truths but only {n_pred} predictions")
    if not np.isfinite(c).all():
        raise ValueError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(c)
    pairs = {int(r): int(col) for r, col in zip(rows, cols)}
    unmatched = frozenset(range(n_pred)) - frozenset(pairs.values())
    return Assignment(pairs=pairs, unmatched_predictions=unmatched)


def set_loss(
    preds: list[Prediction], gts: list[GroundTruthSegment], space: LabelSpace
) -> LossBreakdown:
    """Optimal-assignment set loss over N predictions and #GT segments.

    The no-object slot is the last entry of each prediction's distribution.
    """
    n = len(preds)
    if len(gts) > n:
        raise ValueError("more ground-truth segments than predictions")
    null_slot = space.size

    if gts:
        # Subtracting each prediction's no-object cost makes the assignment
        # minimize the full set loss, not just the matched pair costs: the
        # no-object term of every prediction is a constant of the problem,
        # paid unless that prediction gets matched.
        null_costs = np.array([_classification_cost(p, null_slot) for p in preds])
        cost = np.array([[pair_cost(p, g, space) for p in preds] for g in gts])
        assignment = hungarian_assign(cost - null_costs[None, :])
    else:
        assignment = Assignment(pairs={}, unmatched_predictions=frozenset(range(n)))

    cls_part = 0.0
    mask_part = 0.0
    matched = {pi: gi for gi, pi in assignment.pairs.items()}
    for i, pred in enumerate(preds):
        if i in matched:
            gt = gts[matched[i]]
            cls_part += _classification_cost(pred, space.slot_of(gt.category))
            mask_part += _mask_bce(pred, gt.mask)
        else:
            cls_part += _classification_cost(pred, null_slot)
    return LossBreakdown(
        total=cls_part + mask_part, classification_part=cls_part, mask_part=mask_part
    )
