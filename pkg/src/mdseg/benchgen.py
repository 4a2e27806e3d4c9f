"""Mixed-label-space benchmark construction and the multi-dataset sampler.

Evaluation-only datasets are derived from part annotations: each derived
label space combines a strict subset of an object's parts with the
super-category whose mask is the union of all parts. A derived space is
valid only if it contains at least one category exclusive to each of the
two source label spaces, so that evaluating on it genuinely mixes
datasets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .maskcore import BinaryMask, LabelSpace, SegCategory

__all__ = [
    "PartWholeSpec",
    "MixedDataset",
    "synthesize_super_mask",
    "build_mixed_datasets",
    "validate_mixed_labelspace",
    "equal_frequency_sampler",
    "CIHP_PAIR_SUBSETS",
    "CIHP_MULTI_SUBSETS",
    "CSP_PAIR_SUBSETS",
    "CSP_MULTI_SUBSETS",
    "builtin_benchmark_labelspaces",
]

# Built-in sub-dataset part subsets for the human-parts (CIHP-style) and
# city-scene-parts (CSP-style) benchmarks. Each entry, combined with its
# super-category, yields one derived label space.
CIHP_PAIR_SUBSETS: list[tuple[str, tuple[str, ...]]] = [
    ("person", (part,))
    for part in (
        "arm",
        "coat",
        "dress",
        "face",
        "glove",
        "hair",
        "hat",
        "leg",
        "pants",
        "scarf",
        "shoe",
        "skirt",
        "socks",
        "sunglasses",
        "upper clothes",
    )
]

CIHP_MULTI_SUBSETS: list[tuple[str, tuple[str, ...]]] = [
    ("person", ("leg", "shoe")),
    ("person", ("hat", "hair", "face")),
    ("person", ("hat", "hair", "face", "arm", "leg")),
]

CSP_PAIR_SUBSETS: list[tuple[str, tuple[str, ...]]] = [
    ("car", ("window",)),
    ("car", ("wheel",)),
    ("car", ("light",)),
    ("car", ("license plate",)),
    ("person", ("head",)),
    ("person", ("arm",)),
    ("person", ("leg",)),
]

CSP_MULTI_SUBSETS: list[tuple[str, tuple[str, ...]]] = [
    (
        "car+person",
        (
            "license plate",
            "light",
            "wheel",
            "window",
            "car",
            "arm",
            "head",
            "leg",
            "person",
        ),
    ),
]


@dataclass(frozen=True)
class PartWholeSpec:
    """One object instance annotated as a set of named part masks."""

    super_category: SegCategory
    parts: tuple[SegCategory, ...]
    part_masks: dict[str, BinaryMask]  # keyed by part name
    image_id: int = 0

    def __post_init__(self):
        if not self.parts:
            raise ValueError("an instance needs at least one part")
        dims = {(m.height, m.width) for m in self.part_masks.values()}
        if len(dims) > 1:
            raise ValueError("part masks of one instance disagree on dimensions")
        missing = {p.name for p in self.parts} - set(self.part_masks)
        if missing:
            raise ValueError(f"parts without masks: {sorted(missing)}")


@dataclass(frozen=True)
class MixedDataset:
    """A derived evaluation dataset with a mixed label space."""

    name: str
    label_space: LabelSpace
    # per image: list of (category, mask, instance id)
    annotations: dict[int, list[tuple[SegCategory, BinaryMask, int]]]
    source_space_a: LabelSpace
    source_space_b: LabelSpace
    super_mask_origin: str = "part-union"


def _norm(name: str) -> str:
    return " ".join(name.lower().split())


def synthesize_super_mask(instance: PartWholeSpec) -> BinaryMask:
    """Union of all part masks of an instance, regardless of any subset."""
    dense = None
    for mask in instance.part_masks.values():
        d = mask.to_dense()
        dense = d if dense is None else (dense | d)
    if dense is None:
        raise ValueError("an instance needs at least one part mask")
    return BinaryMask.from_dense(dense)


def validate_mixed_labelspace(c: LabelSpace, a: LabelSpace, b: LabelSpace) -> bool:
    """Check the mixed-space partition condition between two source spaces.

    True iff C contains at least one category found only in A and one found
    only in B. Categories of C absent from both sources are a provenance
    error, not a failed check.
    """
    names_a = {_norm(cat.name) for cat in a.categories}
    names_b = {_norm(cat.name) for cat in b.categories}
    only_a = only_b = False
    for cat in c.categories:
        name = _norm(cat.name)
        in_a, in_b = name in names_a, name in names_b
        if not in_a and not in_b:
            raise ValueError(
                f"category {cat.name!r} comes from neither source label space"
            )
        only_a = only_a or (in_a and not in_b)
        only_b = only_b or (in_b and not in_a)
    return only_a and only_b


def build_mixed_datasets(
    instances: list[PartWholeSpec],
    subsets: list[tuple[str, tuple[str, ...]]],
    parts_space: LabelSpace,
    wholes_space: LabelSpace,
) -> list[MixedDataset]:
    """Derive one mixed dataset per part subset.

    Each subset must be a strict subset of the full part list of its
    super-category; using all parts is rejected because the super mask
    would then be fully covered and the mixture degenerate.
    """
    by_super: dict[str, list[PartWholeSpec]] = {}
    for inst in instances:
        by_super.setdefault(_norm(inst.super_category.name), []).append(inst)

    datasets = []
    for super_name, part_names in subsets:
        super_keys = [s for s in _split_supers(super_name) if _norm(s) in by_super]
        if not super_keys:
            raise ValueError(f"no instances for super-category {super_name!r}")
        full_parts: set[str] = set()
        for key in super_keys:
            for inst in by_super[_norm(key)]:
                full_parts |= {_norm(p.name) for p in inst.parts}
        chosen = {_norm(p) for p in part_names} - {
            _norm(s) for s in _split_supers(super_name)
        }
        if not chosen < full_parts:
            if chosen == full_parts:
                raise ValueError(
                    f"subset {sorted(chosen)} uses every part of {super_name!r}; "
                    "the super-category would be fully covered"
                )
            raise ValueError(
                f"unknown parts {sorted(chosen - full_parts)} for {super_name!r}"
            )

        super_names = {_norm(s) for s in _split_supers(super_name)}
        categories: list[SegCategory] = []
        super_cats: dict[str, SegCategory] = {}
        next_id = 1
        for name in part_names:  # supers may be interleaved (multi benchmark)
            cat = SegCategory(next_id, name, True, "test-time")
            categories.append(cat)
            next_id += 1
            if _norm(name) in super_names:
                super_cats[_norm(name)] = cat
        for s in _split_supers(super_name):  # pair benchmark: super goes last
            if _norm(s) not in super_cats:
                cat = SegCategory(next_id, s, True, "test-time")
                super_cats[_norm(s)] = cat
                categories.append(cat)
                next_id += 1
        space = LabelSpace("test-time", tuple(categories))
        by_name = {_norm(cat.name): cat for cat in categories}

        annotations: dict[int, list[tuple[SegCategory, BinaryMask, int]]] = {}
        instance_counter = 0
        for key in super_keys:
            for inst in by_super[_norm(key)]:
                instance_counter += 1
                anns = annotations.setdefault(inst.image_id, [])
                for part in inst.parts:
                    if _norm(part.name) in chosen:
                        anns.append(
                            (
                                by_name[_norm(part.name)],
                                inst.part_masks[part.name],
                                instance_counter,
                            )
                        )
                anns.append(
                    (
                        super_cats[_norm(inst.super_category.name)],
                        synthesize_super_mask(inst),
                        instance_counter,
                    )
                )

        ds = MixedDataset(
            name=f"{super_name}:{'+'.join(part_names)}",
            label_space=space,
            annotations=annotations,
            source_space_a=parts_space,
            source_space_b=wholes_space,
        )
        if not validate_mixed_labelspace(space, parts_space, wholes_space):
            raise ValueError(f"derived dataset {ds.name!r} fails the partition condition")
        datasets.append(ds)
    return datasets


def _split_supers(super_name: str) -> list[str]:
    # multi-super subsets (the city-scene multi benchmark) join names with '+'
    return super_name.split("+")


def builtin_benchmark_labelspaces() -> dict[str, list[list[str]]]:
    """The shipped benchmark label spaces, as ordered category-name lists."""

    def spaces(subsets):
        out = []
        for super_name, parts in subsets:
            supers = _split_supers(super_name)
            names = [p for p in parts if _norm(p) not in {_norm(s) for s in supers}]
            # multi-super subsets already interleave supers in their part list
            if len(supers) == 1:
                out.append(names + supers)
            else:
                out.append(list(parts))
        return out

    return {
        "cihp_pair": spaces(CIHP_PAIR_SUBSETS),
        "cihp_multi": spaces(CIHP_MULTI_SUBSETS),
        "csp_pair": spaces(CSP_PAIR_SUBSETS),
        "csp_multi": spaces(CSP_MULTI_SUBSETS),
    }


def equal_frequency_sampler(
    dataset_sizes: list[int], draws: int, seed: int
) -> np.ndarray:
    """Seeded sequence of dataset indices with equal expected frequency.

    Dataset sizes only determine how many datasets there are; every index
    is drawn uniformly so small datasets are seen as often as large ones.
    """
    k = len(dataset_sizes)
    if k < 1:
        raise ValueError("need at least one dataset")
    if draws < 1:
        raise ValueError("need at least one draw")
    rng = np.random.default_rng(seed)
    return rng.integers(0, k, size=draws)
