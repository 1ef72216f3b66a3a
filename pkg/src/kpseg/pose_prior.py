"""Skeleton rasterization and geodesic pose priors.

Each person instance contributes a distance field over superpixels (distance
zero on superpixels touched by its rasterized skeleton).  Stacking the fields
and taking a temperature softmax of the negated, globally normalized
distances yields a per-pixel likelihood over instances: the pose-instance
map.
"""

from __future__ import annotations

import numpy as np

from .annotations import COCO_SKELETON, N_JOINTS

DEFAULT_TAU = 0.25


def bresenham_line(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer line from (x0, y0) to (x1, y1) inclusive, all octants."""
    points = []
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        points.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return points
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def _round_clamp(value: float, upper: int) -> int:
    # round-half-up keeps rasterization independent of banker's rounding
    return min(max(int(np.floor(value + 0.5)), 0), upper - 1)


def rasterize_skeleton(
    keypoints: np.ndarray,
    limbs=COCO_SKELETON,
    width: int = None,
    height: int = None,
) -> set[tuple[int, int]]:
    """Pixels covered by an instance's skeleton.

    A limb is drawn iff both endpoint joints are labeled (visibility >= 1);
    endpoints are rounded then clamped into the image.  A labeled joint that
    participates in no drawn limb still contributes its own pixel, so a
    person with a single labeled joint seeds exactly one pixel.
    """
    kp = np.asarray(keypoints, dtype=np.float64)
    if kp.shape != (N_JOINTS, 3):
        raise ValueError(f"expected a ({N_JOINTS}, 3) keypoint array, got {kp.shape}")
    if width is None or height is None or width <= 0 or height <= 0:
        raise ValueError("width and height must be positive")
    visible = kp[:, 2] >= 1
    px = [_round_clamp(x, width) for x in kp[:, 0]]
    py = [_round_clamp(y, height) for y in kp[:, 1]]

    pixels: set[tuple[int, int]] = set()
    in_limb = np.zeros(N_JOINTS, dtype=bool)
    for a, b in limbs:
        if visible[a] and visible[b]:
            pixels.update(bresenham_line(px[a], py[a], px[b], py[b]))
            in_limb[a] = in_limb[b] = True
    for j in range(N_JOINTS):
        if visible[j] and not in_limb[j]:
            pixels.add((px[j], py[j]))
    return pixels


def seeds_from_skeleton(pixels, labels: np.ndarray) -> set[int]:
    """Superpixel labels covering at least one skeleton pixel."""
    labels = np.asarray(labels)
    h, w = labels.shape
    seeds = set()
    for x, y in pixels:
        if not (0 <= x < w and 0 <= y < h):
            raise ValueError(f"skeleton pixel ({x}, {y}) outside {h}x{w} labeling")
        seeds.add(int(labels[y, x]))
    return seeds


def distance_likelihoods(distances: np.ndarray, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Temperature softmax over instances of negated normalized distances.

    ``distances`` is (n, m): n instances, m sites (superpixels or pixels),
    entries >= 0 or +inf.  Distances are divided by the largest finite entry
    (1 when none is finite), then column-wise softmax of -d/tau is taken.
    Infinite distances contribute zero weight; sites where every instance is
    infinitely far get the uniform 1/n.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    dist = np.asarray(distances, dtype=np.float64)
    if dist.ndim != 2 or dist.shape[0] < 1:
        raise ValueError(f"expected an (n, m) distance stack, got shape {dist.shape}")
    if np.isnan(dist).any() or (dist < 0).any():
        raise ValueError("distances must be non-negative or +inf")

    finite = np.isfinite(dist)
    scale = dist[finite].max() if finite.any() else 1.0
    if scale <= 0:
        scale = 1.0
    z = -(dist / scale) / tau  # -inf where the distance is infinite

    zmax = z.max(axis=0)
    unreachable = ~np.isfinite(zmax)
    zmax = np.where(unreachable, 0.0, zmax)
    weights = np.exp(z - zmax[None, :])
    weights[:, unreachable] = 1.0
    return weights / weights.sum(axis=0)[None, :]


def pose_instance_map(fields, labels: np.ndarray, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Broadcast per-superpixel instance likelihoods to an (h, w, n) map.

    ``fields`` is a sequence of n per-superpixel distance fields, each of
    length S = labels.max() + 1.  Every pixel's n values sum to 1.
    """
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError("labeling must be 2-D")
    n_nodes = int(labels.max()) + 1
    stack = np.stack([np.asarray(f, dtype=np.float64) for f in fields])
    if stack.ndim != 2 or stack.shape[1] != n_nodes:
        raise ValueError(
            f"each field must have one entry per superpixel ({n_nodes}), got shape {stack.shape}"
        )
    probs = distance_likelihoods(stack, tau)  # (n, S)
    return probs.T[labels]  # (h, w, n)


def render_keypoint_heatmaps(
    keypoints: np.ndarray, sigma: float, width: int, height: int
) -> np.ndarray:
    """Per-joint Gaussian heatmaps, (height, width, 17).

    Channel k is exp(-((x - xk)^2 + (y - yk)^2) / (2 sigma^2)) around joint
    k's pixel (peak exactly 1 there) when the joint is labeled, and all zeros
    otherwise.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    kp = np.asarray(keypoints, dtype=np.float64)
    if kp.shape != (N_JOINTS, 3):
        raise ValueError(f"expected a ({N_JOINTS}, 3) keypoint array, got {kp.shape}")
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    heat = np.zeros((height, width, N_JOINTS))
    denom = 2.0 * sigma * sigma
    for j in range(N_JOINTS):
        if kp[j, 2] < 1:
            continue
        cx = _round_clamp(kp[j, 0], width)
        cy = _round_clamp(kp[j, 1], height)
        d2 = (xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2
        heat[:, :, j] = np.exp(-d2 / denom)
    return heat
