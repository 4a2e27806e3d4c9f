"""On-disk formats: panoptic annotation JSON + id-PNGs, embedding tables,
prediction files, and the textual RLE form.

Panoptic PNGs encode segment ids per pixel as id = R + 256*G + 65536*B,
with id 0 meaning void.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .maskcore import BinaryMask, LabelSpace, SegCategory
from .postproc import PanopticMap, SegmentInfo
from .semantics import ClassEmbeddingTable, Prediction, normalize_embedding
from .maskcore import SoftMask

__all__ = [
    "rle_to_obj",
    "rle_from_obj",
    "write_panoptic_png",
    "read_panoptic_png",
    "save_panoptic_dataset",
    "load_panoptic_dataset",
    "load_embedding_table",
    "save_embedding_table",
    "load_predictions",
    "save_predictions",
]


def rle_to_obj(mask: BinaryMask) -> dict:
    """Textual RLE form: dimensions plus the column-major run list."""
    return {"height": mask.height, "width": mask.width, "runs": list(mask.runs)}


def rle_from_obj(obj: dict) -> BinaryMask:
    return BinaryMask(int(obj["height"]), int(obj["width"]), tuple(obj["runs"]))


def write_panoptic_png(id_map: np.ndarray, path: str | Path) -> None:
    ids = np.asarray(id_map, dtype=np.int64)
    if ids.min() < 0 or ids.max() >= 256**3:
        raise ValueError("segment ids must fit 24-bit RGB encoding")
    rgb = np.stack(
        [ids % 256, (ids // 256) % 256, ids // 65536], axis=-1
    ).astype(np.uint8)
    Image.fromarray(rgb, mode="RGB").save(path)


def read_panoptic_png(path: str | Path) -> np.ndarray:
    try:
        img = np.asarray(Image.open(path).convert("RGB"), dtype=np.int64)
    except Exception as exc:
        raise ValueError(f"cannot parse panoptic PNG {path}: {exc}") from exc
    return img[..., 0] + 256 * img[..., 1] + 65536 * img[..., 2]


def _space_to_json(space: LabelSpace) -> list[dict]:
    return [
        {"id": c.id, "name": c.name, "isthing": int(c.is_thing)}
        for c in space.categories
    ]


def _space_from_json(categories: list[dict], index="test-time") -> LabelSpace:
    return LabelSpace(
        index,
        tuple(
            SegCategory(int(c["id"]), c["name"], bool(c["isthing"]), index)
            for c in categories
        ),
    )


def save_panoptic_dataset(
    maps: dict[str, PanopticMap],
    space: LabelSpace,
    json_path: str | Path,
    png_dir: str | Path,
) -> None:
    """Write per-image id-PNGs plus the JSON index describing them."""
    png_dir = Path(png_dir)
    png_dir.mkdir(parents=True, exist_ok=True)
    annotations = []
    for image_id, pmap in maps.items():
        file_name = f"{image_id}.png"
        write_panoptic_png(pmap.id_map, png_dir / file_name)
        annotations.append(
            {
                "image_id": image_id,
                "file_name": file_name,
                "height": pmap.height,
                "width": pmap.width,
                "segments_info": [
                    {
                        "id": s.id,
                        "category_id": s.category.id,
                        "area": s.area,
                        "is_instance": int(s.is_instance),
                    }
                    for s in pmap.segments
                ],
            }
        )
    doc = {"categories": _space_to_json(space), "annotations": annotations}
    Path(json_path).write_text(json.dumps(doc, indent=1))


def load_panoptic_dataset(
    json_path: str | Path, png_dir: str | Path
) -> tuple[dict[str, PanopticMap], LabelSpace]:
    """Read a panoptic dataset, cross-checking PNG ids against the JSON."""
    doc = json.loads(Path(json_path).read_text())
    space = _space_from_json(doc["categories"])
    maps: dict[str, PanopticMap] = {}
    for ann in doc["annotations"]:
        image_id = ann["image_id"]
        id_map = read_panoptic_png(Path(png_dir) / ann["file_name"])
        listed = {int(s["id"]) for s in ann["segments_info"]}
        present = set(np.unique(id_map).tolist()) - {0}
        if present != listed:
            raise ValueError(
                f"image {image_id}: PNG ids {sorted(present)} != JSON ids {sorted(listed)}"
            )
        segments = [
            SegmentInfo(
                id=int(s["id"]),
                category=space.category_by_id(int(s["category_id"])),
                area=int(s["area"]),
                is_instance=bool(s.get("is_instance", 1)),
            )
            for s in ann["segments_info"]
        ]
        maps[image_id] = PanopticMap(id_map, segments)
    return maps, space


def save_embedding_table(table: ClassEmbeddingTable, path: str | Path) -> None:
    doc = {
        "dim": table.dim,
        "labelspace_index": table.labelspace.index,
        "categories": [
            {
                "id": c.id,
                "name": c.name,
                "isthing": int(c.is_thing),
                "embedding": table.entries[i].tolist(),
            }
            for i, c in enumerate(table.labelspace.categories)
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_embedding_table(path: str | Path) -> ClassEmbeddingTable:
    """Read an embedding table; vectors are normalized on load."""
    doc = json.loads(Path(path).read_text())
    dim = int(doc["dim"])
    names = [c["name"] for c in doc["categories"]]
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        raise ValueError(f"duplicate class names in table: {sorted(dupes)}")
    entries = []
    for c in doc["categories"]:
        vec = np.asarray(c["embedding"], dtype=np.float64)
        if vec.shape != (dim,):
            raise ValueError(
                f"class {c['name']!r}: embedding dim {vec.shape} != declared {dim}"
            )
        entries.append(normalize_embedding(vec))
    space = _space_from_json(doc["categories"], doc.get("labelspace_index", "test-time"))
    return ClassEmbeddingTable(space, tuple(entries))


def save_predictions(preds: dict[str, list[Prediction]], path: str | Path) -> None:
    doc = {}
    for image_id, plist in preds.items():
        doc[image_id] = [
            {
                "soft_mask": {
                    "height": p.soft_mask.height,
                    "width": p.soft_mask.width,
                    "values": np.asarray(p.soft_mask.values).ravel().tolist(),
                },
                "embedding": np.asarray(p.image_embedding).tolist(),
                "class_probs": (
                    None if p.class_probs is None else p.class_probs.tolist()
                ),
                "score": p.score,
                "source_labelspace": p.source_labelspace,
            }
            for p in plist
        ]
    Path(path).write_text(json.dumps(doc))


def load_predictions(path: str | Path) -> dict[str, list[Prediction]]:
    doc = json.loads(Path(path).read_text())
    out: dict[str, list[Prediction]] = {}
    for image_id, plist in doc.items():
        preds = []
        for p in plist:
            sm = p["soft_mask"]
            h, w = int(sm["height"]), int(sm["width"])
            vals = np.asarray(sm["values"], dtype=np.float64).reshape(h, w)
            probs = p.get("class_probs")
            if probs is not None:
                probs = np.asarray(probs, dtype=np.float64)
                if abs(probs.sum() - 1.0) > 1e-4:
                    raise ValueError(
                        f"image {image_id}: probability vector sums to {probs.sum()}"
                    )
                probs = probs / probs.sum()
            preds.append(
                Prediction(
                    soft_mask=SoftMask(h, w, vals),
                    image_embedding=np.asarray(p["embedding"], dtype=np.float64),
                    source_labelspace=int(p.get("source_labelspace", -1)),
                    class_probs=probs,
                    score=p.get("score"),
                )
            )
        out[image_id] = preds
    return out
