import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mdseg.maskcore import (
    BinaryMask,
    SoftMask,
    binarize_soft_mask,
    contains_with_slack,
    decode_rle,
    encode_rle,
    mask_iou,
)


def grid(rows):
    return np.array(rows, dtype=bool)


class TestRLE:
    def test_all_zero(self):
        m = encode_rle(np.zeros((2, 2), dtype=bool))
        assert m.runs == (4,)

    def test_all_one(self):
        m = encode_rle(np.ones((2, 2), dtype=bool))
        assert m.runs == (0, 4)

    def test_single_pixel_column_major(self):
        # column-major scan of a 2x2 grid visits (0,0),(1,0),(0,1),(1,1);
        # pixel (0,1) is the third in scan order -> runs [2,1,1]
        g = np.zeros((2, 2), dtype=bool)
        g[0, 1] = True
        assert encode_rle(g).runs == (2, 1, 1)

    def test_decode_all_zero(self):
        assert not decode_rle(BinaryMask(2, 2, (4,))).any()

    def test_decode_single_pixel(self):
        dense = decode_rle(BinaryMask(2, 2, (2, 1, 1)))
        expected = np.zeros((2, 2), dtype=bool)
        expected[0, 1] = True
        assert (dense == expected).all()

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            encode_rle(np.zeros((0, 2), dtype=bool))

    def test_corrupt_run_sum_rejected(self):
        with pytest.raises(ValueError):
            BinaryMask(2, 2, (3,))

    def test_interior_zero_run_rejected(self):
        with pytest.raises(ValueError):
            BinaryMask(2, 2, (1, 0, 1, 2))

    @settings(max_examples=200)
    @given(
        arrays(
            bool,
            st.tuples(st.integers(1, 64), st.integers(1, 64)),
        )
    )
    def test_round_trip_identity(self, g):
        assert (decode_rle(encode_rle(g)) == g).all()


class TestIoU:
    def test_identical(self):
        m = encode_rle(grid([[1, 0], [1, 1]]))
        assert mask_iou(m, m) == 1.0

    def test_disjoint(self):
        a = encode_rle(grid([[1, 0], [0, 0]]))
        b = encode_rle(grid([[0, 1], [0, 0]]))
        assert mask_iou(a, b) == 0.0

    def test_partial_overlap(self):
        # |a|=2, |b|=3, overlap 1 -> 1/4
        a = encode_rle(grid([[1, 1], [0, 0]]))
        b = encode_rle(grid([[1, 0], [1, 1]]))
        assert mask_iou(a, b) == pytest.approx(0.25)

    def test_both_empty_is_zero(self):
        e = encode_rle(np.zeros((3, 3), dtype=bool))
        assert mask_iou(e, e) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mask_iou(BinaryMask(2, 2, (4,)), BinaryMask(2, 3, (6,)))

    @given(
        arrays(bool, (8, 8)),
        arrays(bool, (8, 8)),
    )
    def test_symmetric_and_bounded(self, ga, gb):
        a, b = encode_rle(ga), encode_rle(gb)
        v = mask_iou(a, b)
        assert v == mask_iou(b, a)
        assert 0.0 <= v <= 1.0


class TestBinarize:
    def test_full(self):
        m = SoftMask(2, 2, np.ones((2, 2)))
        assert binarize_soft_mask(m, 0.5).area == 4

    def test_empty(self):
        m = SoftMask(2, 2, np.zeros((2, 2)))
        assert binarize_soft_mask(m, 0.5).area == 0

    def test_strict_inequality(self):
        m = SoftMask(1, 2, np.array([[0.4, 0.6]]))
        dense = binarize_soft_mask(m, 0.5).to_dense()
        assert dense.tolist() == [[False, True]]
        # exactly at threshold stays off
        at = SoftMask(1, 1, np.array([[0.5]]))
        assert binarize_soft_mask(at, 0.5).area == 0

    def test_threshold_range(self):
        m = SoftMask(1, 1, np.array([[0.5]]))
        with pytest.raises(ValueError):
            binarize_soft_mask(m, 0.0)
        with pytest.raises(ValueError):
            binarize_soft_mask(m, 1.0)

    @given(
        arrays(np.float64, (6, 6), elements=st.floats(0, 1)),
        st.floats(0.05, 0.45),
        st.floats(0.5, 0.95),
    )
    def test_monotone_in_threshold(self, vals, lo, hi):
        m = SoftMask(6, 6, vals)
        low = binarize_soft_mask(m, lo).to_dense()
        high = binarize_soft_mask(m, hi).to_dense()
        assert not (high & ~low).any()


class TestContainment:
    def test_exact_containment(self):
        big = encode_rle(grid([[1, 1], [1, 1]]))
        small = encode_rle(grid([[1, 0], [0, 0]]))
        assert contains_with_slack(big, small, 0.0)

    def test_disjoint(self):
        big = encode_rle(grid([[1, 0], [0, 0]]))
        small = encode_rle(grid([[0, 1], [0, 0]]))
        assert not contains_with_slack(big, small, 0.5)

    def test_slack_boundary(self):
        # |small| = 10, overlap 9
        big_g = np.zeros((2, 10), dtype=bool)
        big_g[0, :9] = True
        small_g = np.zeros((2, 10), dtype=bool)
        small_g[0, :] = True
        big, small = encode_rle(big_g), encode_rle(small_g)
        assert contains_with_slack(big, small, 0.1)
        assert not contains_with_slack(big, small, 0.05)

    def test_empty_small_rejected(self):
        big = encode_rle(np.ones((2, 2), dtype=bool))
        small = encode_rle(np.zeros((2, 2), dtype=bool))
        with pytest.raises(ValueError):
            contains_with_slack(big, small, 0.1)

    @given(arrays(bool, (6, 6)), arrays(bool, (6, 6)))
    def test_zero_slack_is_subset(self, gb, gs):
        if not gs.any():
            return
        big, small = encode_rle(gb), encode_rle(gs)
        assert contains_with_slack(big, small, 0.0) == bool((~gb & gs).sum() == 0)
