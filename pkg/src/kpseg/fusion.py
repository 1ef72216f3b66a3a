"""Fusing shape priors with person score maps, plus the two baselines.

Also owns the on-disk exchange formats:

* Score map (``.p2if``): magic ``P2IF``, two little-endian uint32 (width,
  height), then height*width float32 little-endian probabilities in [0, 1],
  row-major.
* Segmentation logits (``.p2lf``): magic ``P2LF``, width, height as above,
  then two row-major float32 planes: background logits, person logits.
* Cascade weights: text file of 18 whitespace-separated decimals, the 17
  heatmap weights followed by the shape weight.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotations import N_JOINTS
from .pose_prior import DEFAULT_TAU

SCORE_MAP_MAGIC = b"P2IF"
LOGITS_MAGIC = b"P2LF"
DEFAULT_THETA_BG = 0.5
_SQRT2 = math.sqrt(2.0)


class FileFormatError(ValueError):
    """A binary or text payload does not match its declared format."""


@dataclass
class PipelineConfig:
    """Knobs shared by the inference modes; defaults match the CLI."""

    tau: float = DEFAULT_TAU
    epsilon: float = 1e-3
    theta_bg: float = DEFAULT_THETA_BG
    sigma: float = 3.0
    superpixels: int = 1000
    compactness: float = 10.0
    fw_cap: int = 2000

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 <= self.theta_bg <= 1.0:
            raise ValueError("theta_bg must lie in [0, 1]")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.superpixels < 1:
            raise ValueError("superpixels must be at least 1")
        if self.compactness <= 0:
            raise ValueError("compactness must be positive")


@dataclass
class CascadeWeights:
    heat_weights: np.ndarray  # (17,)
    shape_weight: float

    def __post_init__(self):
        self.heat_weights = np.asarray(self.heat_weights, dtype=np.float64)
        if self.heat_weights.shape != (N_JOINTS,):
            raise ValueError(f"expected {N_JOINTS} heatmap weights, got {self.heat_weights.shape}")

    @classmethod
    def zeros(cls) -> "CascadeWeights":
        return cls(np.zeros(N_JOINTS), 0.0)


def fuse(prior: np.ndarray, score: np.ndarray) -> np.ndarray:
    """Element-wise product of an (h, w, n) prior with an (h, w) score map."""
    prior = np.asarray(prior, dtype=np.float64)
    score = np.asarray(score, dtype=np.float64)
    if prior.ndim != 3:
        raise ValueError(f"prior must be (h, w, n), got shape {prior.shape}")
    if score.shape != prior.shape[:2]:
        raise ValueError(f"score map {score.shape} does not match prior {prior.shape[:2]}")
    return prior * score[:, :, None]


def label_instances(heat: np.ndarray, score: np.ndarray, theta_bg: float = DEFAULT_THETA_BG) -> np.ndarray:
    """Argmax labeling of an instance heatmap with a background threshold.

    A pixel is 0 (background) when its person score falls below theta_bg,
    else 1 + argmax over instance channels (ties to the lowest index).  With
    no instances everything is background.
    """
    heat = np.asarray(heat, dtype=np.float64)
    score = np.asarray(score, dtype=np.float64)
    if heat.ndim != 3:
        raise ValueError(f"heatmap must be (h, w, n), got shape {heat.shape}")
    if score.shape != heat.shape[:2]:
        raise ValueError(f"score map {score.shape} does not match heatmap {heat.shape[:2]}")
    h, w, n = heat.shape
    if n == 0:
        return np.zeros((h, w), dtype=np.int32)
    labels = heat.argmax(axis=2).astype(np.int32) + 1  # argmax takes the first maximum
    labels[score < theta_bg] = 0
    return labels


def bbox_baseline(score: np.ndarray, boxes, theta_bg: float = DEFAULT_THETA_BG) -> np.ndarray:
    """Snap the score map at oracle boxes.

    Pixels outside every box are background.  Inside, a pixel takes the index
    (1-based) of the smallest-area box containing it when its score clears
    theta_bg, else 0.  Equal-area ties go to the lowest box index.
    """
    score = np.asarray(score, dtype=np.float64)
    if score.ndim != 2:
        raise ValueError(f"score map must be 2-D, got shape {score.shape}")
    h, w = score.shape
    labels = np.zeros((h, w), dtype=np.int32)
    rects = []
    for i, (x, y, bw, bh) in enumerate(boxes):
        x0 = min(max(int(np.floor(x)), 0), w)
        y0 = min(max(int(np.floor(y)), 0), h)
        x1 = min(max(int(np.ceil(x + bw)), 0), w)
        y1 = min(max(int(np.ceil(y + bh)), 0), h)
        rects.append((i, max(0, (x1 - x0)) * max(0, (y1 - y0)), x0, y0, x1, y1))
    # paint large boxes first so smaller ones overwrite; equal areas paint the
    # higher index first, leaving the lowest index on top
    for i, area, x0, y0, x1, y1 in sorted(rects, key=lambda r: (-r[1], -r[0])):
        if area == 0:
            continue
        window = labels[y0:y1, x0:x1]
        window[score[y0:y1, x0:x1] >= theta_bg] = i + 1
    return labels


def grid_fast_sweeping(cost: np.ndarray, seeds, epsilon: float = 1e-3) -> np.ndarray:
    """Shortest-path distance transform on the 8-connected pixel grid.

    Stepping between pixels p and q costs
    ((epsilon + cost(p)) + (epsilon + cost(q))) / 2, times sqrt(2) for
    diagonal moves.  Values are relaxed by Gauss-Seidel sweeps in the four
    canonical orderings, repeated until a full cycle changes nothing, which
    reaches the exact grid shortest-path fixpoint.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f"cost map must be 2-D, got shape {cost.shape}")
    if (cost < 0).any() or np.isnan(cost).any():
        raise ValueError("costs must be non-negative")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    h, w = cost.shape
    seed_list = sorted({(int(x), int(y)) for x, y in seeds})
    if not seed_list:
        raise ValueError("seed set must be non-empty")

    node = np.full((h + 2, w + 2), np.inf)
    node[1:-1, 1:-1] = epsilon + cost
    dist = np.full((h + 2, w + 2), np.inf)
    for x, y in seed_list:
        if not (0 <= x < w and 0 <= y < h):
            raise ValueError(f"seed ({x}, {y}) outside {h}x{w} grid")
        dist[y + 1, x + 1] = 0.0

    sweeps = (
        (range(1, h + 1), False),
        (range(1, h + 1), True),
        (range(h, 0, -1), False),
        (range(h, 0, -1), True),
    )
    changed = True
    while changed:
        changed = False
        for row_order, reverse_cols in sweeps:
            if _sweep(dist, node, row_order, reverse_cols, w):
                changed = True
    return dist[1:-1, 1:-1]


def _sweep(dist, node, row_order, reverse_cols, w):
    changed = False
    for r in row_order:
        nrow = node[r, 1 : w + 1]
        up_d, up_n = dist[r - 1], node[r - 1]
        dn_d, dn_n = dist[r + 1], node[r + 1]
        cand = up_d[1 : w + 1] + (nrow + up_n[1 : w + 1]) * 0.5
        np.minimum(cand, dn_d[1 : w + 1] + (nrow + dn_n[1 : w + 1]) * 0.5, out=cand)
        np.minimum(cand, up_d[0:w] + (nrow + up_n[0:w]) * (0.5 * _SQRT2), out=cand)
        np.minimum(cand, up_d[2 : w + 2] + (nrow + up_n[2 : w + 2]) * (0.5 * _SQRT2), out=cand)
        np.minimum(cand, dn_d[0:w] + (nrow + dn_n[0:w]) * (0.5 * _SQRT2), out=cand)
        np.minimum(cand, dn_d[2 : w + 2] + (nrow + dn_n[2 : w + 2]) * (0.5 * _SQRT2), out=cand)
        row_d = dist[r]
        if reverse_cols:
            np.minimum(cand, row_d[0:w] + (nrow + node[r, 0:w]) * 0.5, out=cand)
            cols = range(w - 1, -1, -1)
        else:
            np.minimum(cand, row_d[2 : w + 2] + (nrow + node[r, 2 : w + 2]) * 0.5, out=cand)
            cols = range(w)
        d = row_d[1 : w + 1].tolist()
        nl = nrow.tolist()
        cl = cand.tolist()
        prev_d = math.inf
        prev_n = math.inf
        row_changed = False
        for c in cols:
            best = cl[c]
            lead = prev_d + (nl[c] + prev_n) * 0.5
            if lead < best:
                best = lead
            if best < d[c]:
                d[c] = best
                row_changed = True
            prev_d = d[c]
            prev_n = nl[c]
        if row_changed:
            row_d[1 : w + 1] = d
            changed = True
    return changed


def cascade_head(seg_logits: np.ndarray, heatmaps: np.ndarray, weights: CascadeWeights) -> np.ndarray:
    """Refine two-class segmentation logits with a weighted keypoint-heatmap shape term.

    shape(p) = sum_k heat_weights[k] * heatmaps(p, k); the person logit
    becomes logit + shape_weight * shape, and the returned score map is the
    person probability of a two-class softmax.  18 parameters in total; with
    all of them zero the output is exactly the softmax of the input logits.
    """
    seg_logits = np.asarray(seg_logits, dtype=np.float64)
    heatmaps = np.asarray(heatmaps, dtype=np.float64)
    if seg_logits.ndim != 3 or seg_logits.shape[2] != 2:
        raise ValueError(f"seg_logits must be (h, w, 2), got shape {seg_logits.shape}")
    if heatmaps.shape != seg_logits.shape[:2] + (N_JOINTS,):
        raise ValueError(
            f"heatmaps must be (h, w, {N_JOINTS}), got shape {heatmaps.shape}"
        )
    shape = heatmaps @ weights.heat_weights
    background = seg_logits[:, :, 0]
    person = seg_logits[:, :, 1] + weights.shape_weight * shape
    top = np.maximum(background, person)
    e_bg = np.exp(background - top)
    e_fg = np.exp(person - top)
    return e_fg / (e_bg + e_fg)


def instance_confidence(heat: np.ndarray, labeling: np.ndarray, index: int) -> float:
    """Mean heatmap value over the pixels an instance claimed (0 when none)."""
    heat = np.asarray(heat, dtype=np.float64)
    labeling = np.asarray(labeling)
    if heat.ndim != 3 or heat.shape[:2] != labeling.shape:
        raise ValueError(f"heatmap {heat.shape} does not match labeling {labeling.shape}")
    if not 1 <= index <= heat.shape[2]:
        raise ValueError(f"instance index {index} outside 1..{heat.shape[2]}")
    claimed = labeling == index
    if not claimed.any():
        return 0.0
    return float(heat[:, :, index - 1][claimed].mean())


# ---------------------------------------------------------------------------
# file formats


def write_score_map(path, score: np.ndarray) -> None:
    score = np.asarray(score, dtype=np.float64)
    if score.ndim != 2:
        raise ValueError(f"score map must be 2-D, got shape {score.shape}")
    if not np.isfinite(score).all() or score.min() < 0.0 or score.max() > 1.0:
        raise ValueError("score map values must be finite and within [0, 1]")
    h, w = score.shape
    payload = SCORE_MAP_MAGIC + struct.pack("<II", w, h) + score.astype("<f4").tobytes()
    Path(path).write_bytes(payload)


def read_score_map(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != SCORE_MAP_MAGIC:
        raise FileFormatError(f"{path}: not a {SCORE_MAP_MAGIC.decode()} score map")
    w, h = struct.unpack("<II", raw[4:12])
    expected = 12 + 4 * w * h
    if len(raw) != expected:
        raise FileFormatError(f"{path}: expected {expected} bytes for {w}x{h}, got {len(raw)}")
    score = np.frombuffer(raw, dtype="<f4", offset=12).reshape(h, w).astype(np.float64)
    if not np.isfinite(score).all() or score.min() < 0.0 or score.max() > 1.0:
        raise FileFormatError(f"{path}: score values outside [0, 1]")
    return score


def write_logits(path, logits: np.ndarray) -> None:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 3 or logits.shape[2] != 2:
        raise ValueError(f"logits must be (h, w, 2), got shape {logits.shape}")
    if not np.isfinite(logits).all():
        raise ValueError("logits must be finite")
    h, w = logits.shape[:2]
    payload = (
        LOGITS_MAGIC
        + struct.pack("<II", w, h)
        + logits[:, :, 0].astype("<f4").tobytes()
        + logits[:, :, 1].astype("<f4").tobytes()
    )
    Path(path).write_bytes(payload)


def read_logits(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != LOGITS_MAGIC:
        raise FileFormatError(f"{path}: not a {LOGITS_MAGIC.decode()} logits file")
    w, h = struct.unpack("<II", raw[4:12])
    expected = 12 + 8 * w * h
    if len(raw) != expected:
        raise FileFormatError(f"{path}: expected {expected} bytes for {w}x{h}, got {len(raw)}")
    planes = np.frombuffer(raw, dtype="<f4", offset=12).astype(np.float64)
    background = planes[: w * h].reshape(h, w)
    person = planes[w * h :].reshape(h, w)
    if not (np.isfinite(background).all() and np.isfinite(person).all()):
        raise FileFormatError(f"{path}: logits must be finite")
    return np.stack([background, person], axis=2)


def write_cascade_weights(path, weights: CascadeWeights) -> None:
    values = [repr(float(v)) for v in weights.heat_weights] + [repr(float(weights.shape_weight))]
    Path(path).write_text(" ".join(values) + "\n")


def read_cascade_weights(path) -> CascadeWeights:
    tokens = Path(path).read_text().split()
    if len(tokens) != N_JOINTS + 1:
        raise FileFormatError(
            f"{path}: expected {N_JOINTS + 1} weights (17 heatmap + 1 shape), got {len(tokens)}"
        )
    try:
        values = [float(t) for t in tokens]
    except ValueError as exc:
        raise FileFormatError(f"{path}: non-numeric weight ({exc})") from exc
    return CascadeWeights(np.asarray(values[:N_JOINTS]), values[N_JOINTS])
