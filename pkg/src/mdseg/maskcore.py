"""Binary mask primitives: RLE storage, IoU, binarization, containment.

Masks are stored run-length encoded in column-major scan order, the
convention used by the common panoptic/instance annotation tooling, so
externally produced annotations interoperate bit-exactly. The run list
always starts with the count of leading zeros (which may be 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BinaryMask",
    "SoftMask",
    "SegCategory",
    "LabelSpace",
    "encode_rle",
    "decode_rle",
    "mask_iou",
    "binarize_soft_mask",
    "contains_with_slack",
]


@dataclass(frozen=True)
class BinaryMask:
    """A 2-D binary region over an H x W canvas, RLE-encoded column-major."""

    height: int
    width: int
    runs: tuple[int, ...]

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ValueError(f"mask dimensions must be positive, got {self.height}x{self.width}")
        runs = tuple(int(r) for r in self.runs)
        object.__setattr__(self, "runs", runs)
        if any(r < 0 for r in runs):
            raise ValueError("run lengths must be non-negative")
        if any(r == 0 for r in runs[1:]):
            raise ValueError("only the leading zero-run may have length 0")
        if sum(runs) != self.height * self.width:
            raise ValueError(
                f"run sum {sum(runs)} does not cover the {self.height}x{self.width} canvas"
            )

    @property
    def area(self) -> int:
        # odd-indexed runs are the 1-runs
        return sum(self.runs[1::2])

    def to_dense(self) -> np.ndarray:
        return decode_rle(self)

    @classmethod
    def from_dense(cls, grid: np.ndarray) -> "BinaryMask":
        return encode_rle(grid)

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        _check_same_dims(self, other)
        return encode_rle(self.to_dense() & other.to_dense())

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        _check_same_dims(self, other)
        return encode_rle(self.to_dense() | other.to_dense())


@dataclass(frozen=True)
class SoftMask:
    """Per-pixel activations in [0, 1], the raw decoder mask output."""

    height: int
    width: int
    values: np.ndarray

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ValueError("soft mask dimensions must be positive")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.height, self.width):
            raise ValueError(
                f"values shape {vals.shape} does not match {self.height}x{self.width}"
            )
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("soft mask values must lie in [0, 1]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class SegCategory:
    """A named class, either instance-aware ("thing") or amorphous ("stuff")."""

    id: int
    name: str
    is_thing: bool
    source_labelspace: int | str = "test-time"

    def __post_init__(self):
        if not self.name:
            raise ValueError("category name must be non-empty")


@dataclass(frozen=True)
class LabelSpace:
    """An ordered set of categories belonging to one dataset or a test mixture."""

    index: int | str
    categories: tuple[SegCategory, ...]

    def __post_init__(self):
        cats = tuple(self.categories)
        object.__setattr__(self, "categories", cats)
        if len(cats) < 1:
            raise ValueError("label space must contain at least one category")
        names = [c.name for c in cats]
        if len(set(names)) != len(names):
            raise ValueError("category names must be unique within a label space")
        ids = [c.id for c in cats]
        if len(set(ids)) != len(ids):
            raise ValueError("category ids must be unique within a label space")

    @property
    def size(self) -> int:
        return len(self.categories)

    def category_by_id(self, cat_id: int) -> SegCategory:
        for c in self.categories:
            if c.id == cat_id:
                return c
        raise KeyError(f"category id {cat_id} not in label space {self.index}")

    def slot_of(self, category: SegCategory) -> int:
        """Position of a category in this space's ordering (= its logit slot)."""
        for i, c in enumerate(self.categories):
            if c.id == category.id:
                return i
        raise KeyError(f"category {category.name!r} not in label space {self.index}")


def _check_same_dims(a, b) -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError(
            f"dimension mismatch: {a.height}x{a.width} vs {b.height}x{b.width}"
        )


def encode_rle(grid: np.ndarray) -> BinaryMask:
    """Encode a dense bit grid as a column-major RLE mask."""
    g = np.asarray(grid)
    if g.ndim != 2 or g.size == 0:
        raise ValueError(f"expected a non-empty 2-D grid, got shape {g.shape}")
    h, w = g.shape
    flat = g.astype(bool).ravel(order="F")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return BinaryMask(h, w, tuple(runs))


def decode_rle(mask: BinaryMask) -> np.ndarray:
    """Decode an RLE mask back to a dense boolean grid (inverse of encode_rle)."""
    total = mask.height * mask.width
    runs = np.asarray(mask.runs, dtype=np.int64)
    if runs.sum() != total:
        raise ValueError("corrupt RLE: run sum does not match dimensions")
    bits = np.arange(len(runs)) % 2 == 1
    flat = np.repeat(bits, runs)
    return flat.reshape((mask.height, mask.width), order="F")


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection-over-union of two masks; 0.0 when both are empty."""
    _check_same_dims(a, b)
    da, db = a.to_dense(), b.to_dense()
    inter = np.count_nonzero(da & db)
    union = np.count_nonzero(da | db)
    if union == 0:
        return 0.0
    return inter / union


def binarize_soft_mask(m: SoftMask, threshold: float = 0.5) -> BinaryMask:
    """Threshold a soft mask; a pixel is set iff its value is strictly above."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"binarize threshold must be in (0, 1), got {threshold}")
    return encode_rle(m.values > threshold)


def contains_with_slack(big: BinaryMask, small: BinaryMask, slack: float) -> bool:
    """True iff the small mask is contained in the big one up to `slack`.

    The denominator is the small mask's own area: containment holds when
    at least (1 - slack) of its pixels are covered by the big mask.
    """
    _check_same_dims(big, small)
    if not 0.0 <= slack < 1.0:
        raise ValueError(f"slack must be in [0, 1), got {slack}")
    small_area = small.area
    if small_area == 0:
        raise ValueError("containment is undefined for an empty small mask")
    inter = np.count_nonzero(big.to_dense() & small.to_dense())
    return inter / small_area >= 1.0 - slack
