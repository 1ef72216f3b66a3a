"""Per-image inference: keypoint priors, bbox snapping, or grid distance transforms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .annotations import PersonInstance, to_rle_dict
from .fusion import (
    CascadeWeights,
    PipelineConfig,
    bbox_baseline,
    cascade_head,
    fuse,
    grid_fast_sweeping,
    instance_confidence,
    label_instances,
)
from .graph import build_rag, seeded_distance
from .imageops import slic, sobel_magnitude, to_gray
from .pose_prior import (
    distance_likelihoods,
    pose_instance_map,
    rasterize_skeleton,
    render_keypoint_heatmaps,
    seeds_from_skeleton,
)

MODES = ("keypoints", "bbox", "grid-dt")
PERSON_CATEGORY_ID = 1


@dataclass
class ImageInference:
    labeling: np.ndarray
    heat: np.ndarray
    records: list[dict] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    superpixels: np.ndarray | None = None
    prior: np.ndarray | None = None


def infer_image(
    image: np.ndarray,
    instances: list[PersonInstance],
    score: np.ndarray | None,
    skeleton,
    config: PipelineConfig,
    mode: str = "keypoints",
) -> ImageInference:
    """Run one inference mode on a single image.

    ``score`` may be None only in grid-dt mode, where a uniform score of 1 is
    assumed and the labeling is then the pure prior argmax.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    h, w = image.shape[:2]
    if score is None:
        if mode != "grid-dt":
            raise ValueError(f"mode {mode!r} requires a score map")
        score = np.ones((h, w))
    if score.shape != (h, w):
        raise ValueError(f"score map {score.shape} does not match image {(h, w)}")

    if mode == "bbox":
        return _infer_bbox(instances, score, config)
    if mode == "keypoints":
        return _infer_keypoints(image, instances, score, skeleton, config)
    return _infer_grid_dt(image, instances, score, skeleton, config)


def _instance_records(instances, labeling, heat, diagnostics):
    h, w = labeling.shape
    records = []
    for i, inst in enumerate(instances):
        mask = labeling == i + 1
        if not mask.any():
            diagnostics.append(f"instance {inst.instance_id}: claimed no pixels; omitted from results")
            continue
        records.append(
            {
                "image_id": inst.image_id,
                "category_id": PERSON_CATEGORY_ID,
                "segmentation": to_rle_dict(mask),
                "score": instance_confidence(heat, labeling, i + 1),
            }
        )
    return records


def _skeleton_pixels(instances, skeleton, width, height, diagnostics):
    per_instance = []
    for inst in instances:
        pixels = rasterize_skeleton(inst.keypoints, skeleton, width, height)
        if not pixels:
            diagnostics.append(
                f"instance {inst.instance_id}: no labeled joints; uniform prior fallback"
            )
        per_instance.append(pixels)
    return per_instance


def _infer_keypoints(image, instances, score, skeleton, config):
    h, w = image.shape[:2]
    diagnostics: list[str] = []
    gray = to_gray(image)
    gradients = sobel_magnitude(gray)
    labels = slic(image, min(config.superpixels, h * w), config.compactness)
    rag = build_rag(labels, gradients, config.epsilon)

    if not instances:
        labeling = np.zeros((h, w), dtype=np.int32)
        heat = np.zeros((h, w, 0))
        return ImageInference(labeling, heat, [], diagnostics, superpixels=labels)

    fields = []
    for pixels in _skeleton_pixels(instances, skeleton, w, h, diagnostics):
        if pixels:
            seeds = seeds_from_skeleton(pixels, labels)
            fields.append(seeded_distance(rag, seeds))
        else:
            fields.append(np.full(rag.node_count, np.inf))
    prior = pose_instance_map(fields, labels, config.tau)
    heat = fuse(prior, score)
    labeling = label_instances(heat, score, config.theta_bg)
    records = _instance_records(instances, labeling, heat, diagnostics)
    return ImageInference(labeling, heat, records, diagnostics, superpixels=labels, prior=prior)


def _infer_grid_dt(image, instances, score, skeleton, config):
    h, w = image.shape[:2]
    diagnostics: list[str] = []
    gradients = sobel_magnitude(to_gray(image))

    if not instances:
        return ImageInference(np.zeros((h, w), dtype=np.int32), np.zeros((h, w, 0)), [], diagnostics)

    stack = np.full((len(instances), h * w), np.inf)
    for i, pixels in enumerate(_skeleton_pixels(instances, skeleton, w, h, diagnostics)):
        if pixels:
            stack[i] = grid_fast_sweeping(gradients, pixels, config.epsilon).ravel()
    prior = distance_likelihoods(stack, config.tau).T.reshape(h, w, len(instances))
    heat = fuse(prior, score)
    labeling = label_instances(heat, score, config.theta_bg)
    records = _instance_records(instances, labeling, heat, diagnostics)
    return ImageInference(labeling, heat, records, diagnostics, prior=prior)


def _infer_bbox(instances, score, config):
    h, w = score.shape
    diagnostics: list[str] = []
    boxes = [inst.bbox for inst in instances]
    labeling = bbox_baseline(score, boxes, config.theta_bg)
    heat = np.zeros((h, w, len(instances)))
    for i, (x, y, bw, bh) in enumerate(boxes):
        x0 = min(max(int(np.floor(x)), 0), w)
        y0 = min(max(int(np.floor(y)), 0), h)
        x1 = min(max(int(np.ceil(x + bw)), 0), w)
        y1 = min(max(int(np.ceil(y + bh)), 0), h)
        heat[y0:y1, x0:x1, i] = score[y0:y1, x0:x1]
    records = _instance_records(instances, labeling, heat, diagnostics)
    return ImageInference(labeling, heat, records, diagnostics)


def cascade_score(
    logits: np.ndarray,
    instances: list[PersonInstance],
    weights: CascadeWeights,
    sigma: float,
) -> np.ndarray:
    """Score map from segmentation logits refined by keypoint heatmaps.

    The 17-channel heatmap input is synthesized from the instances' joints;
    with several people in the image each channel takes the per-pixel maximum
    across instances.
    """
    h, w = logits.shape[:2]
    combined = np.zeros((h, w, 17))
    for inst in instances:
        np.maximum(combined, render_keypoint_heatmaps(inst.keypoints, sigma, w, h), out=combined)
    return cascade_head(logits, combined, weights)
