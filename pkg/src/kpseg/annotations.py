"""COCO-style annotation parsing, dataset intersection, and mask codecs.

Two annotation documents describe the same images: an instance-segmentation
document (masks own the truth here) and a person-keypoints document (joints
own the truth here).  A person instance is retained only when the same
annotation id appears in both documents, it is not a crowd region, and its
mask decodes to at least one pixel.  Images that retain no instances are
dropped.

Masks travel as uncompressed COCO RLE: a ``counts`` list of run lengths over
the column-major (Fortran order) flattening of the mask, alternating
background/foreground and starting with background.  Polygons are filled with
the even-odd rule, sampling pixel centers at (x + 0.5, y + 0.5).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

N_JOINTS = 17

# Limb connectivity of the 17-joint person annotation convention, zero-based
# joint indices.  Annotation documents carry the same table one-based; when a
# document provides one it wins over this default.
COCO_SKELETON: tuple[tuple[int, int], ...] = (
    (15, 13), (13, 11), (16, 14), (14, 12), (11, 12),
    (5, 11), (6, 12), (5, 6), (5, 7), (6, 8), (7, 9), (8, 10),
    (1, 2), (0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (4, 6),
)

INDEX_FORMAT = "kpseg-index"
INDEX_VERSION = 1


class ParseError(ValueError):
    """An annotation document is malformed."""


class ValidationError(ValueError):
    """A record is structurally valid JSON but violates a field contract."""


class CodecError(ValueError):
    """A segmentation payload cannot be decoded."""


@dataclass(frozen=True)
class ImageRecord:
    image_id: int
    width: int
    height: int
    file_name: str


@dataclass
class PersonInstance:
    instance_id: int
    image_id: int
    bbox: tuple[float, float, float, float]  # x, y, w, h
    segmentation: dict  # {"size": [h, w], "counts": [...]} uncompressed RLE
    keypoints: np.ndarray  # (17, 3) float64, columns x, y, visibility

    def mask(self) -> np.ndarray:
        h, w = self.segmentation["size"]
        return decode_mask(self.segmentation, w, h)

    def visible_joint_count(self) -> int:
        return int((self.keypoints[:, 2] >= 1).sum())


@dataclass
class DatasetIndex:
    images: list[ImageRecord]
    instances: dict[int, list[PersonInstance]] = field(default_factory=dict)
    skeleton: tuple[tuple[int, int], ...] = COCO_SKELETON

    @property
    def image_count(self) -> int:
        return len(self.images)

    @property
    def instance_count(self) -> int:
        return sum(len(v) for v in self.instances.values())

    def instances_for(self, image_id: int) -> list[PersonInstance]:
        return self.instances.get(image_id, [])


# ---------------------------------------------------------------------------
# mask codecs


def decode_mask(segmentation, width: int, height: int) -> np.ndarray:
    """Decode a COCO segmentation payload into a (height, width) bool mask.

    ``segmentation`` is either an RLE dict ({"counts": [...]} with optional
    "size") or a list of flat polygon rings [x0, y0, x1, y1, ...].  Polygon
    rings are combined with the even-odd rule, so overlapping rings cut holes.
    """
    if width <= 0 or height <= 0:
        raise CodecError(f"mask dimensions must be positive, got {width}x{height}")
    if isinstance(segmentation, dict):
        return _decode_rle(segmentation, width, height)
    if isinstance(segmentation, (list, tuple)):
        return _decode_polygons(segmentation, width, height)
    raise CodecError(f"unsupported segmentation payload of type {type(segmentation).__name__}")


def _decode_rle(segmentation: dict, width: int, height: int) -> np.ndarray:
    if "counts" not in segmentation:
        raise CodecError("RLE segmentation lacks 'counts'")
    counts = segmentation["counts"]
    if isinstance(counts, str):
        raise CodecError("compressed RLE strings are not supported; use integer counts")
    size = segmentation.get("size")
    if size is not None and tuple(size) != (height, width):
        raise CodecError(f"RLE size {list(size)} does not match image {height}x{width}")
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts):
        raise CodecError("RLE counts must be non-negative")
    if sum(counts) != width * height:
        raise CodecError(
            f"RLE counts sum to {sum(counts)}, expected {width * height} for a {height}x{width} mask"
        )
    values = np.repeat(np.arange(len(counts), dtype=np.uint8) % 2, counts)
    return values.reshape((height, width), order="F").astype(bool)


def _decode_polygons(polygons, width: int, height: int) -> np.ndarray:
    if len(polygons) == 0:
        raise CodecError("empty polygon list")
    rings = []
    for i, ring in enumerate(polygons):
        ring = np.asarray(ring, dtype=np.float64)
        if ring.ndim != 1 or ring.size % 2 != 0 or ring.size < 6:
            raise CodecError(f"polygon ring {i} must be a flat list of >= 3 (x, y) pairs")
        rings.append(ring.reshape(-1, 2))
    mask = np.zeros((height, width), dtype=bool)
    for y in range(height):
        yc = y + 0.5
        crossings = []
        for ring in rings:
            x0, y0 = ring[:, 0], ring[:, 1]
            x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
            # half-open edge test makes shared vertices count once
            hit = ((y0 <= yc) & (yc < y1)) | ((y1 <= yc) & (yc < y0))
            if hit.any():
                t = (yc - y0[hit]) / (y1[hit] - y0[hit])
                crossings.append(x0[hit] + t * (x1[hit] - x0[hit]))
        if not crossings:
            continue
        xs = np.sort(np.concatenate(crossings))
        for a, b in zip(xs[0::2], xs[1::2]):
            # pixel centers x+0.5 in [a, b)
            lo = max(0, int(np.ceil(a - 0.5)))
            hi = min(width, int(np.ceil(b - 0.5)))
            if hi > lo:
                mask[y, lo:hi] = True
    return mask


def encode_rle(mask: np.ndarray) -> list[int]:
    """Encode a bool mask as uncompressed column-major RLE counts.

    The counts alternate background/foreground runs and always start with a
    background run (0 when the first pixel is foreground).
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise CodecError(f"mask must be 2-D, got shape {mask.shape}")
    flat = mask.astype(np.uint8).flatten(order="F")
    if flat.size == 0:
        raise CodecError("cannot encode an empty mask")
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate(([0], boundaries, [flat.size]))
    counts = np.diff(edges).tolist()
    if flat[0] == 1:
        counts = [0] + counts
    return [int(c) for c in counts]


def to_rle_dict(mask: np.ndarray) -> dict:
    h, w = mask.shape
    return {"size": [int(h), int(w)], "counts": encode_rle(mask)}


# ---------------------------------------------------------------------------
# document parsing


def _require(record: dict, key: str, what: str):
    if key not in record:
        raise ParseError(f"{what}: missing '{key}'")
    return record[key]


def _parse_images(doc: dict) -> list[ImageRecord]:
    images = []
    for rec in doc.get("images", []):
        image_id = _require(rec, "id", "image record")
        width = int(_require(rec, "width", f"image {image_id}"))
        height = int(_require(rec, "height", f"image {image_id}"))
        if width <= 0 or height <= 0:
            raise ValidationError(f"image {image_id}: non-positive dimensions {width}x{height}")
        images.append(
            ImageRecord(
                image_id=int(image_id),
                width=width,
                height=height,
                file_name=str(rec.get("file_name", f"{image_id}.png")),
            )
        )
    return images


def _person_category_id(doc: dict) -> int:
    for cat in doc.get("categories", []):
        if cat.get("name") == "person":
            return int(cat["id"])
    return 1


def _doc_skeleton(doc: dict) -> tuple[tuple[int, int], ...] | None:
    for cat in doc.get("categories", []):
        if cat.get("name") == "person" and cat.get("skeleton"):
            limbs = []
            for pair in cat["skeleton"]:
                if len(pair) != 2:
                    raise ParseError(f"skeleton entry {pair!r} is not a pair")
                a, b = int(pair[0]) - 1, int(pair[1]) - 1  # documents are one-based
                if not (0 <= a < N_JOINTS and 0 <= b < N_JOINTS):
                    raise ValidationError(f"skeleton pair {pair!r} is out of joint range")
                limbs.append((a, b))
            return tuple(limbs)
    return None


def _parse_keypoints(raw, instance_id: int, image: ImageRecord) -> np.ndarray:
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 1 or arr.size != 3 * N_JOINTS:
        raise ValidationError(
            f"instance {instance_id}: keypoint array has length {arr.size}, expected {3 * N_JOINTS}"
        )
    kp = arr.reshape(N_JOINTS, 3)
    vis = kp[:, 2]
    if not np.isin(vis, (0.0, 1.0, 2.0)).all():
        raise ValidationError(f"instance {instance_id}: visibility flags must be 0, 1, or 2")
    kp[:, 0] = np.clip(kp[:, 0], 0.0, image.width - 1)
    kp[:, 1] = np.clip(kp[:, 1], 0.0, image.height - 1)
    return kp


def parse_dataset(segmentation_doc: dict, keypoints_doc: dict, keep_invisible: bool = True) -> DatasetIndex:
    """Intersect a segmentation document with a keypoints document.

    Masks and boxes come from ``segmentation_doc``, joints from
    ``keypoints_doc``.  Crowd regions are dropped, as are instances that only
    one document knows about and images left with no instances.  Instances
    whose 17 joints are all unlabeled are retained unless ``keep_invisible``
    is False.
    """
    images = _parse_images(segmentation_doc)
    by_image_id = {im.image_id: im for im in images}
    person_cat = _person_category_id(segmentation_doc)

    kp_by_id: dict[int, dict] = {}
    for rec in keypoints_doc.get("annotations", []):
        ann_id = int(_require(rec, "id", "keypoint annotation"))
        kp_by_id[ann_id] = rec

    instances: dict[int, list[PersonInstance]] = {}
    for rec in segmentation_doc.get("annotations", []):
        ann_id = int(_require(rec, "id", "segmentation annotation"))
        if int(rec.get("category_id", person_cat)) != person_cat:
            continue
        kp_rec = kp_by_id.get(ann_id)
        if kp_rec is None:
            continue  # not in both documents
        if rec.get("iscrowd", 0) or kp_rec.get("iscrowd", 0):
            continue
        image_id = int(_require(rec, "image_id", f"annotation {ann_id}"))
        image = by_image_id.get(image_id)
        if image is None:
            raise ParseError(f"annotation {ann_id}: unknown image_id {image_id}")
        keypoints = _parse_keypoints(
            _require(kp_rec, "keypoints", f"annotation {ann_id}"), ann_id, image
        )
        if not keep_invisible and not (keypoints[:, 2] >= 1).any():
            continue
        segmentation = _require(rec, "segmentation", f"annotation {ann_id}")
        try:
            mask = decode_mask(segmentation, image.width, image.height)
        except CodecError as exc:
            raise CodecError(f"annotation {ann_id}: {exc}") from exc
        if not mask.any():
            logger.warning("annotation %d decodes to an empty mask; dropped", ann_id)
            continue
        x, y, w, h = (float(v) for v in _require(rec, "bbox", f"annotation {ann_id}"))
        x = min(max(x, 0.0), image.width)
        y = min(max(y, 0.0), image.height)
        w = min(w, image.width - x)
        h = min(h, image.height - y)
        instances.setdefault(image_id, []).append(
            PersonInstance(
                instance_id=ann_id,
                image_id=image_id,
                bbox=(x, y, w, h),
                segmentation=to_rle_dict(mask),
                keypoints=keypoints,
            )
        )

    kept_images = [im for im in images if instances.get(im.image_id)]
    skeleton = _doc_skeleton(keypoints_doc) or COCO_SKELETON
    return DatasetIndex(images=kept_images, instances=instances, skeleton=skeleton)


# ---------------------------------------------------------------------------
# index file


def save_index(index: DatasetIndex, path) -> None:
    doc = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "skeleton": [list(pair) for pair in index.skeleton],
        "images": [
            {
                "image_id": im.image_id,
                "width": im.width,
                "height": im.height,
                "file_name": im.file_name,
                "instances": [
                    {
                        "instance_id": inst.instance_id,
                        "bbox": list(inst.bbox),
                        "segmentation": inst.segmentation,
                        "keypoints": inst.keypoints.reshape(-1).tolist(),
                    }
                    for inst in index.instances_for(im.image_id)
                ],
            }
            for im in index.images
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_index(path) -> DatasetIndex:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if doc.get("format") != INDEX_FORMAT:
        raise ParseError(f"{path}: not a {INDEX_FORMAT} document")
    if doc.get("version") != INDEX_VERSION:
        raise ParseError(f"{path}: unsupported index version {doc.get('version')!r}")
    images = []
    instances: dict[int, list[PersonInstance]] = {}
    for rec in doc["images"]:
        image = ImageRecord(
            image_id=int(rec["image_id"]),
            width=int(rec["width"]),
            height=int(rec["height"]),
            file_name=rec["file_name"],
        )
        images.append(image)
        group = []
        for raw in rec["instances"]:
            group.append(
                PersonInstance(
                    instance_id=int(raw["instance_id"]),
                    image_id=image.image_id,
                    bbox=tuple(float(v) for v in raw["bbox"]),
                    segmentation=raw["segmentation"],
                    keypoints=np.asarray(raw["keypoints"], dtype=np.float64).reshape(N_JOINTS, 3),
                )
            )
        instances[image.image_id] = group
    skeleton = tuple((int(a), int(b)) for a, b in doc["skeleton"])
    return DatasetIndex(images=images, instances=instances, skeleton=skeleton)
