import numpy as np
import pytest
from scipy.stats import chisquare

from mdseg.benchgen import (
    CIHP_MULTI_SUBSETS,
    CIHP_PAIR_SUBSETS,
    CSP_MULTI_SUBSETS,
    CSP_PAIR_SUBSETS,
    MixedDataset,
    PartWholeSpec,
    build_mixed_datasets,
    builtin_benchmark_labelspaces,
    equal_frequency_sampler,
    synthesize_super_mask,
    validate_mixed_labelspace,
)
from mdseg.maskcore import SegCategory, encode_rle

from conftest import make_space

PERSON = SegCategory(100, "person", True)


def part_mask(h, w, r0, r1, c0, c1):
    g = np.zeros((h, w), dtype=bool)
    g[r0:r1, c0:c1] = True
    return encode_rle(g)


def person_instance(image_id=0):
    parts = (
        SegCategory(1, "face", True),
        SegCategory(2, "arm", True),
        SegCategory(3, "leg", True),
    )
    masks = {
        "face": part_mask(16, 16, 0, 4, 4, 8),
        "arm": part_mask(16, 16, 4, 8, 0, 4),
        "leg": part_mask(16, 16, 8, 16, 4, 8),
    }
    return PartWholeSpec(PERSON, parts, masks, image_id)


class TestSuperMask:
    def test_disjoint_union_area(self):
        inst = person_instance()
        total = sum(m.area for m in inst.part_masks.values())
        assert synthesize_super_mask(inst).area == total

    def test_overlapping_parts_bounds(self):
        parts = (SegCategory(1, "a", True), SegCategory(2, "b", True))
        masks = {
            "a": part_mask(8, 8, 0, 4, 0, 4),
            "b": part_mask(8, 8, 2, 6, 2, 6),
        }
        inst = PartWholeSpec(PERSON, parts, masks)
        area = synthesize_super_mask(inst).area
        assert max(m.area for m in masks.values()) <= area
        assert area <= sum(m.area for m in masks.values())

    def test_every_part_contained(self):
        inst = person_instance()
        sup = synthesize_super_mask(inst).to_dense()
        for m in inst.part_masks.values():
            assert not (m.to_dense() & ~sup).any()


PARTS_SPACE = make_space(["face", "arm", "leg", "hair"], index=1)
WHOLES_SPACE = make_space(["person", "car", "sky"], index=2)


class TestValidate:
    def test_valid_mixture(self):
        c = make_space(["face", "person"])
        assert validate_mixed_labelspace(c, PARTS_SPACE, WHOLES_SPACE)

    def test_single_source_fails(self):
        c = make_space(["face", "arm"])
        assert not validate_mixed_labelspace(c, PARTS_SPACE, WHOLES_SPACE)

    def test_unknown_category_is_provenance_error(self):
        c = make_space(["face", "banana"])
        with pytest.raises(ValueError, match="banana"):
            validate_mixed_labelspace(c, PARTS_SPACE, WHOLES_SPACE)

    def test_name_matching_case_insensitive(self):
        c = make_space(["  Face ", "PERSON"])
        assert validate_mixed_labelspace(c, PARTS_SPACE, WHOLES_SPACE)


class TestBuildMixedDatasets:
    def test_pair_dataset(self):
        [ds] = build_mixed_datasets(
            [person_instance()], [("person", ("face",))], PARTS_SPACE, WHOLES_SPACE
        )
        assert [c.name for c in ds.label_space.categories] == ["face", "person"]
        anns = ds.annotations[0]
        assert {c.name for c, _, _ in anns} == {"face", "person"}

    def test_multi_dataset(self):
        [ds] = build_mixed_datasets(
            [person_instance()], [("person", ("leg", "arm"))], PARTS_SPACE, WHOLES_SPACE
        )
        assert [c.name for c in ds.label_space.categories] == ["leg", "arm", "person"]

    def test_full_part_subset_rejected(self):
        with pytest.raises(ValueError, match="fully covered"):
            build_mixed_datasets(
                [person_instance()],
                [("person", ("face", "arm", "leg"))],
                PARTS_SPACE,
                WHOLES_SPACE,
            )

    def test_super_mask_is_part_union(self):
        [ds] = build_mixed_datasets(
            [person_instance()], [("person", ("face",))], PARTS_SPACE, WHOLES_SPACE
        )
        super_anns = [m for c, m, _ in ds.annotations[0] if c.name == "person"]
        assert super_anns[0].area == synthesize_super_mask(person_instance()).area

    def test_every_dataset_passes_partition_condition(self):
        datasets = build_mixed_datasets(
            [person_instance()],
            [("person", ("face",)), ("person", ("arm", "leg"))],
            PARTS_SPACE,
            WHOLES_SPACE,
        )
        for ds in datasets:
            assert validate_mixed_labelspace(
                ds.label_space, ds.source_space_a, ds.source_space_b
            )


class TestBuiltinFixtures:
    def test_counts(self):
        spaces = builtin_benchmark_labelspaces()
        assert len(spaces["cihp_pair"]) == 15
        assert len(spaces["cihp_multi"]) == 3
        assert len(spaces["csp_pair"]) == 7
        assert len(spaces["csp_multi"]) == 1

    def test_pair_spaces_have_two_labels(self):
        spaces = builtin_benchmark_labelspaces()
        assert all(len(s) == 2 for s in spaces["cihp_pair"])
        assert all(len(s) == 2 for s in spaces["csp_pair"])

    def test_published_name_lists(self):
        spaces = builtin_benchmark_labelspaces()
        assert ["face", "person"] in spaces["cihp_pair"]
        assert ["upper clothes", "person"] in spaces["cihp_pair"]
        assert spaces["cihp_multi"] == [
            ["leg", "shoe", "person"],
            ["hat", "hair", "face", "person"],
            ["hat", "hair", "face", "arm", "leg", "person"],
        ]
        assert ["license plate", "car"] in spaces["csp_pair"]
        assert spaces["csp_multi"] == [
            [
                "license plate",
                "light",
                "wheel",
                "window",
                "car",
                "arm",
                "head",
                "leg",
                "person",
            ]
        ]

    def test_subset_constants_consistent(self):
        assert len(CIHP_PAIR_SUBSETS) == 15
        assert len(CIHP_MULTI_SUBSETS) == 3
        assert len(CSP_PAIR_SUBSETS) == 7
        assert len(CSP_MULTI_SUBSETS) == 1


class TestSampler:
    def test_single_dataset(self):
        seq = equal_frequency_sampler([10], draws=100, seed=1)
        assert (seq == 0).all()

    def test_binomial_concentration(self):
        seq = equal_frequency_sampler([5, 500000], draws=10000, seed=7)
        count0 = int((seq == 0).sum())
        # 3-sigma binomial bound around 5000
        assert abs(count0 - 5000) <= 300

    def test_determinism_and_seed_sensitivity(self):
        a = equal_frequency_sampler([1, 2, 3], 64, seed=42)
        b = equal_frequency_sampler([1, 2, 3], 64, seed=42)
        c = equal_frequency_sampler([1, 2, 3], 64, seed=43)
        assert (a == b).all()
        assert (a != c).any()

    def test_chi_square_uniformity(self):
        for k in (2, 3, 5):
            sizes = [10 ** (i + 1) for i in range(k)]  # wildly uneven sizes
            seq = equal_frequency_sampler(sizes, draws=10000, seed=k)
            observed = np.bincount(seq, minlength=k)
            _, p = chisquare(observed)
            assert p > 0.001, (k, observed.tolist(), p)

    def test_validation(self):
        with pytest.raises(ValueError):
            equal_frequency_sampler([], 10, seed=0)
        with pytest.raises(ValueError):
            equal_frequency_sampler([1], 0, seed=0)
