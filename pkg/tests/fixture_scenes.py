"""Deterministic synthetic dataset: five scenes of person-shaped blobs.

Each scene is a 96x96 raster of elliptical "people" on a gray background,
with oracle joints laid out on a canonical stick figure, annotation documents
in the two-file convention (instance masks + person keypoints), and a score
map produced by blurring the ground-truth union.  Blob grays are spread
across a luma ladder so neighboring people stay separable after grayscale
conversion.

The documents also carry records that ingestion must drop: a crowd region on
its own image, one annotation present only in the keypoints document, and one
present only in the segmentation document.  What survives is 5 images and 11
instances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from kpseg.annotations import decode_mask, to_rle_dict
from kpseg.fusion import write_score_map
from kpseg.render import write_rgb_png

SIZE = 96
BACKGROUND = (205, 205, 205)
COLORS = {
    "dark": (60, 30, 30),
    "mid": (150, 60, 60),
    "light": (90, 150, 190),
    "pale": (210, 160, 90),
}

KEYPOINT_NAMES = [
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
]

SKELETON_1BASED = [
    [16, 14], [14, 12], [17, 15], [15, 13], [12, 13], [6, 12], [7, 13],
    [6, 7], [6, 8], [7, 9], [8, 10], [9, 11], [2, 3], [1, 2], [1, 3],
    [2, 4], [3, 5], [4, 6], [5, 7],
]

# canonical stick figure in a unit box, x across, y down
CANONICAL_JOINTS = [
    (0.50, 0.06),
    (0.45, 0.03), (0.55, 0.03),
    (0.40, 0.06), (0.60, 0.06),
    (0.34, 0.22), (0.66, 0.22),
    (0.28, 0.38), (0.72, 0.38),
    (0.24, 0.52), (0.76, 0.52),
    (0.40, 0.56), (0.60, 0.56),
    (0.38, 0.75), (0.62, 0.75),
    (0.38, 0.93), (0.62, 0.93),
]


@dataclass
class Person:
    cx: float
    cy: float
    rx: float
    ry: float
    angle: float
    color: str
    hidden_joints: tuple[int, ...] = ()
    polygon: list[float] | None = None  # overrides the ellipse when set
    full_mask: np.ndarray = field(default=None, repr=False)
    visible_mask: np.ndarray = field(default=None, repr=False)
    joints: np.ndarray = field(default=None, repr=False)


# people listed front first; later entries are drawn underneath
SCENES: dict[int, list[Person]] = {
    1: [
        Person(34, 48, 13, 26, 0, "dark"),
        Person(57, 48, 13, 26, 0, "light"),
    ],
    2: [
        Person(48, 47, 12, 27, 0, "dark"),
        Person(27, 49, 12, 26, 0, "light"),
        Person(69, 49, 12, 26, 0, "pale"),
    ],
    3: [
        Person(48, 49, 9, 30, -38, "pale"),
        Person(48, 47, 9, 30, 38, "dark"),
    ],
    4: [
        Person(
            48, 48, 14, 29, 0, "mid",
            polygon=[48, 16, 66, 34, 66, 62, 48, 80, 30, 62, 30, 34],
        ),
    ],
    5: [
        Person(52, 56, 12, 24, 8, "dark"),
        Person(31, 54, 12, 25, -5, "pale"),
        Person(78, 28, 8, 15, 0, "light", hidden_joints=(15, 16)),
    ],
}


def ellipse_mask(cx, cy, rx, ry, angle, size=SIZE):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    t = np.deg2rad(angle)
    dx, dy = xx - cx, yy - cy
    u = dx * np.cos(t) + dy * np.sin(t)
    v = -dx * np.sin(t) + dy * np.cos(t)
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def person_joints(person: Person) -> np.ndarray:
    t = np.deg2rad(person.angle)
    joints = np.zeros((17, 3))
    for j, (fx, fy) in enumerate(CANONICAL_JOINTS):
        u = (fx - 0.5) * 2.0 * person.rx * 0.80
        v = (fy - 0.5) * 2.0 * person.ry * 0.88
        joints[j, 0] = person.cx + u * np.cos(t) - v * np.sin(t)
        joints[j, 1] = person.cy + u * np.sin(t) + v * np.cos(t)
        joints[j, 2] = 2.0
    return joints


def _materialize(person: Person, occluders: np.ndarray) -> None:
    if person.polygon is not None:
        person.full_mask = decode_mask([person.polygon], SIZE, SIZE)
    else:
        person.full_mask = ellipse_mask(person.cx, person.cy, person.rx, person.ry, person.angle)
    person.visible_mask = person.full_mask & ~occluders
    joints = person_joints(person)
    for j in range(17):
        x = int(np.floor(joints[j, 0] + 0.5))
        y = int(np.floor(joints[j, 1] + 0.5))
        if occluders[min(max(y, 0), SIZE - 1), min(max(x, 0), SIZE - 1)]:
            joints[j, 2] = 1.0  # occluded but labeled
    for j in person.hidden_joints:
        joints[j, 2] = 0.0
    person.joints = joints


def _tight_bbox(mask: np.ndarray) -> list[float]:
    ys, xs = np.nonzero(mask)
    return [float(xs.min()), float(ys.min()), float(xs.max() - xs.min() + 1), float(ys.max() - ys.min() + 1)]


def build_fixture(root: Path) -> dict:
    """Write rasters, score maps, and the two annotation documents under root."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "scores").mkdir(parents=True, exist_ok=True)

    images_meta = []
    seg_annotations = []
    kp_annotations = []
    ann_id = 0
    for image_id, people in SCENES.items():
        occluders = np.zeros((SIZE, SIZE), dtype=bool)
        for person in people:  # front first
            _materialize(person, occluders)
            occluders |= person.full_mask

        canvas = np.empty((SIZE, SIZE, 3), dtype=np.uint8)
        canvas[:] = BACKGROUND
        for person in reversed(people):  # paint back to front
            canvas[person.full_mask] = COLORS[person.color]

        file_name = f"{image_id:06d}.png"
        write_rgb_png(root / "images" / file_name, canvas)
        union = np.zeros((SIZE, SIZE), dtype=bool)
        for person in people:
            union |= person.full_mask
        score = np.clip(gaussian_filter(union.astype(np.float64), sigma=1.2), 0.0, 1.0)
        write_score_map(root / "scores" / f"{image_id}.p2if", score)
        images_meta.append(
            {"id": image_id, "width": SIZE, "height": SIZE, "file_name": file_name}
        )

        for person in people:
            ann_id += 1
            segmentation = (
                [person.polygon] if person.polygon is not None else to_rle_dict(person.visible_mask)
            )
            seg_annotations.append(
                {
                    "id": ann_id,
                    "image_id": image_id,
                    "category_id": 1,
                    "iscrowd": 0,
                    "bbox": _tight_bbox(person.visible_mask),
                    "area": int(person.visible_mask.sum()),
                    "segmentation": segmentation,
                }
            )
            kp_annotations.append(
                {
                    "id": ann_id,
                    "image_id": image_id,
                    "category_id": 1,
                    "iscrowd": 0,
                    "bbox": _tight_bbox(person.visible_mask),
                    "num_keypoints": int((person.joints[:, 2] >= 1).sum()),
                    "keypoints": [round(float(v), 2) for v in person.joints.reshape(-1)],
                }
            )

    # image 6 holds only a crowd region, so ingestion drops the whole image
    crowd_mask = np.zeros((SIZE, SIZE), dtype=bool)
    crowd_mask[20:70, 12:84] = True
    images_meta.append({"id": 6, "width": SIZE, "height": SIZE, "file_name": "000006.png"})
    write_rgb_png(root / "images" / "000006.png", np.full((SIZE, SIZE, 3), 140, np.uint8))
    write_score_map(root / "scores" / "6.p2if", np.zeros((SIZE, SIZE)))
    seg_annotations.append(
        {
            "id": 12,
            "image_id": 6,
            "category_id": 1,
            "iscrowd": 1,
            "bbox": _tight_bbox(crowd_mask),
            "area": int(crowd_mask.sum()),
            "segmentation": to_rle_dict(crowd_mask),
        }
    )
    kp_annotations.append(
        {
            "id": 12,
            "image_id": 6,
            "category_id": 1,
            "iscrowd": 1,
            "bbox": _tight_bbox(crowd_mask),
            "num_keypoints": 0,
            "keypoints": [0] * 51,
        }
    )
    # present only in the keypoints document: must not survive the intersection
    kp_annotations.append(
        {
            "id": 13,
            "image_id": 2,
            "category_id": 1,
            "iscrowd": 0,
            "bbox": [10.0, 10.0, 20.0, 30.0],
            "num_keypoints": 17,
            "keypoints": [round(float(v), 2) for v in person_joints(Person(20, 25, 8, 12, 0, "mid")).reshape(-1)],
        }
    )
    # present only in the segmentation document: same fate
    lone = np.zeros((SIZE, SIZE), dtype=bool)
    lone[4:10, 4:10] = True
    seg_annotations.append(
        {
            "id": 14,
            "image_id": 1,
            "category_id": 1,
            "iscrowd": 0,
            "bbox": _tight_bbox(lone),
            "area": int(lone.sum()),
            "segmentation": to_rle_dict(lone),
        }
    )

    seg_doc = {
        "images": images_meta,
        "annotations": seg_annotations,
        "categories": [{"id": 1, "name": "person", "supercategory": "person"}],
    }
    kp_doc = {
        "images": images_meta,
        "annotations": kp_annotations,
        "categories": [
            {
                "id": 1,
                "name": "person",
                "supercategory": "person",
                "keypoints": KEYPOINT_NAMES,
                "skeleton": SKELETON_1BASED,
            }
        ],
    }
    seg_path = root / "instances.json"
    kp_path = root / "person_keypoints.json"
    seg_path.write_text(json.dumps(seg_doc))
    kp_path.write_text(json.dumps(kp_doc))
    return {
        "root": root,
        "segmentation": seg_path,
        "keypoints": kp_path,
        "images": root / "images",
        "scores": root / "scores",
    }
