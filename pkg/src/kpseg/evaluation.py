"""COCO-style mask AP.

Predictions across all images are ranked by descending score (ties keep
insertion order) and matched greedily: each prediction takes the so-far
unmatched ground-truth mask of its image with the highest IoU, provided that
IoU clears the threshold.  Sweeping the ranking gives a precision/recall
curve; AP is the mean of the interpolated precision sampled at the 101
recall points 0.00, 0.01, ..., 1.00.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

RECALL_POINTS = np.arange(101) / 100.0


def iou_thresholds(iou_max: float = 0.95) -> list[float]:
    """The standard 0.50, 0.55, ... ladder, ending at iou_max inclusive."""
    if iou_max < 0.5:
        raise ValueError("iou_max must be at least 0.5")
    steps = int(round((iou_max - 0.5) / 0.05))
    return [round(0.5 + 0.05 * i, 2) for i in range(steps + 1)]


@dataclass
class Prediction:
    """One predicted instance mask; masks are expected non-empty."""

    image_id: int
    mask: np.ndarray
    score: float

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.ndim != 2:
            raise ValueError(f"prediction mask must be 2-D, got shape {self.mask.shape}")
        if not np.isfinite(self.score):
            raise ValueError(f"prediction score must be finite, got {self.score}")


@dataclass
class EvalReport:
    ap_by_threshold: dict[float, float]
    ap_50: float = field(init=False)
    ap_range: float = field(init=False)

    def __post_init__(self):
        self.ap_50 = self.ap_by_threshold.get(0.5, 0.0)
        values = list(self.ap_by_threshold.values())
        self.ap_range = float(np.mean(values)) if values else 0.0


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two boolean masks; 0 when both are empty."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    inter = np.logical_and(a, b).sum()
    return float(inter / union)


def average_precision(predictions, ground_truth: dict, iou_threshold: float) -> float:
    """101-point interpolated AP at one IoU threshold.

    ``ground_truth`` maps image_id to a list of boolean masks.  Returns 0
    when there are no predictions or no ground truth (the latter with a
    diagnostic if predictions exist anyway).
    """
    n_gt = sum(len(masks) for masks in ground_truth.values())
    if n_gt == 0:
        if predictions:
            logger.warning(
                "%d predictions scored against empty ground truth; AP is 0", len(predictions)
            )
        return 0.0
    if not predictions:
        return 0.0

    order = sorted(range(len(predictions)), key=lambda i: -predictions[i].score)
    matched = {img: np.zeros(len(masks), dtype=bool) for img, masks in ground_truth.items()}
    true_positive = np.zeros(len(order), dtype=bool)
    for rank, i in enumerate(order):
        pred = predictions[i]
        masks = ground_truth.get(pred.image_id, [])
        taken = matched.get(pred.image_id)
        best_iou = 0.0
        best = -1
        for j, gt_mask in enumerate(masks):
            if taken[j]:
                continue
            iou = mask_iou(pred.mask, gt_mask)
            if iou > best_iou:  # strict: IoU ties keep the earlier ground truth
                best_iou = iou
                best = j
        if best >= 0 and best_iou >= iou_threshold:
            taken[best] = True
            true_positive[rank] = True

    cum_tp = np.cumsum(true_positive)
    precision = cum_tp / np.arange(1, len(order) + 1)
    recall = cum_tp / n_gt
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    interp = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(interp.mean())


def ap_range(predictions, ground_truth: dict, thresholds=None) -> EvalReport:
    """AP at each threshold plus their mean; defaults to 0.50:0.95 in 0.05 steps."""
    if thresholds is None:
        thresholds = iou_thresholds()
    by_threshold = {
        float(t): average_precision(predictions, ground_truth, float(t)) for t in thresholds
    }
    return EvalReport(ap_by_threshold=by_threshold)


def predictions_from_records(records, image_sizes: dict[int, tuple[int, int]]) -> list[Prediction]:
    """Decode results-document records into Predictions.

    ``image_sizes`` maps image_id to (width, height); an unknown image_id
    raises with the offending id in the message.
    """
    from .annotations import decode_mask  # local import to avoid a cycle

    predictions = []
    for rec in records:
        image_id = int(rec["image_id"])
        if image_id not in image_sizes:
            raise ValueError(f"results reference unknown image_id {image_id}")
        w, h = image_sizes[image_id]
        mask = decode_mask(rec["segmentation"], w, h)
        predictions.append(Prediction(image_id=image_id, mask=mask, score=float(rec["score"])))
    return predictions
