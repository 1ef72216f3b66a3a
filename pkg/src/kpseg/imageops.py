"""Grayscale conversion, Sobel gradients, and SLIC superpixels."""

from __future__ import annotations

import numpy as np
from PIL import Image
from scipy import sparse
from scipy.sparse.csgraph import connected_components

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
SLIC_ITERATIONS = 10  # fixed; assignment converges well before this on natural images


def load_image(path) -> np.ndarray:
    """Read an 8-bit PNG or PPM raster as an (h, w, 3) uint8 RGB array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def to_gray(image: np.ndarray) -> np.ndarray:
    """Luma grayscale (0.299 R + 0.587 G + 0.114 B), scaled to [0, 1].

    uint8 input is divided by 255; float input is assumed to already sit in
    [0, 1].
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) image, got shape {image.shape}")
    if image.shape[0] == 0 or image.shape[1] == 0:
        raise ValueError("zero-sized image")
    rgb = image.astype(np.float64)
    if image.dtype == np.uint8:
        rgb = rgb / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    return LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b


def sobel_magnitude(gray: np.ndarray) -> np.ndarray:
    """Gradient magnitude sqrt(gx^2 + gy^2) from the standard 3x3 Sobel kernels.

    The image border is replicate-padded, so a unit step between two constant
    halves yields |gx| = 4.0 on both columns adjacent to the step, border rows
    included.
    """
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {gray.shape}")
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        raise ValueError(f"image {gray.shape} is smaller than the 3x3 kernel")
    p = np.pad(gray, 1, mode="edge")
    gx = (
        (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy = (
        (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    return np.sqrt(gx * gx + gy * gy)


def slic(image: np.ndarray, target_superpixels: int, compactness: float = 10.0) -> np.ndarray:
    """SLIC superpixels: k-means in joint color-position space.

    Seeds start on a regular grid, run a fixed 10 assignment/update rounds,
    and a connectivity pass then merges stray fragments into their largest
    neighbor.  Color distances are measured in RGB scaled to [0, 255] units;
    the position term is weighted by compactness / grid_step, so on a
    constant-color image the result is a Voronoi partition of the seed grid
    (distance ties go to the lowest label).

    Returns an (h, w) int32 labeling with labels contiguous from 0; each
    label's pixels form a single 4-connected region.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) image, got shape {image.shape}")
    h, w = image.shape[:2]
    n_px = h * w
    if not 1 <= target_superpixels <= n_px:
        raise ValueError(
            f"target_superpixels must be in [1, {n_px}] for a {h}x{w} image, got {target_superpixels}"
        )
    if compactness <= 0:
        raise ValueError("compactness must be positive")

    rgb = image.astype(np.float64)
    if image.dtype != np.uint8:
        rgb = rgb * 255.0

    step = float(np.sqrt(n_px / target_superpixels))
    nx = max(1, round(w / step))
    ny = max(1, round(h / step))
    # centers at (k + 0.5) * spacing - 0.5 in pixel coordinates; symmetric
    # placement makes equidistant boundaries fall between pixels.
    cxs = (np.arange(nx) + 0.5) * (w / nx) - 0.5
    cys = (np.arange(ny) + 0.5) * (h / ny) - 0.5
    grid_y, grid_x = np.meshgrid(cys, cxs, indexing="ij")
    pos = np.stack([grid_x.ravel(), grid_y.ravel()], axis=1)  # (K, 2)
    k_total = pos.shape[0]
    seed_px = np.floor(pos + 0.5).astype(int)
    colors = rgb[np.clip(seed_px[:, 1], 0, h - 1), np.clip(seed_px[:, 0], 0, w - 1)]
    centers = np.concatenate([colors, pos], axis=1)  # (K, 5): r g b x y

    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    ratio2 = (compactness / step) ** 2
    radius = int(np.ceil(step)) + 1

    labels = np.full((h, w), -1, dtype=np.int32)
    flat_idx = np.arange(n_px)
    for _ in range(SLIC_ITERATIONS):
        best = np.full((h, w), np.inf)
        for k in range(k_total):
            cr, cg, cb, cx, cy = centers[k]
            x0 = max(0, int(cx) - radius)
            x1 = min(w, int(cx) + radius + 1)
            y0 = max(0, int(cy) - radius)
            y1 = min(h, int(cy) + radius + 1)
            if x1 <= x0 or y1 <= y0:
                continue
            win = rgb[y0:y1, x0:x1]
            d2 = (win[..., 0] - cr) ** 2 + (win[..., 1] - cg) ** 2 + (win[..., 2] - cb) ** 2
            dx2 = (xs[x0:x1] - cx) ** 2
            dy2 = (ys[y0:y1] - cy) ** 2
            d2 = d2 + ratio2 * (dx2[None, :] + dy2[:, None])
            bw = best[y0:y1, x0:x1]
            lw = labels[y0:y1, x0:x1]
            upd = d2 < bw  # strict: ties stay with the earlier (lower) label
            bw[upd] = d2[upd]
            lw[upd] = k
        lab_flat = labels.ravel()
        counts = np.bincount(lab_flat, minlength=k_total).astype(np.float64)
        nonzero = counts > 0
        for c in range(3):
            sums = np.bincount(lab_flat, weights=rgb[..., c].ravel(), minlength=k_total)
            centers[nonzero, c] = sums[nonzero] / counts[nonzero]
        sx = np.bincount(lab_flat, weights=(flat_idx % w).astype(np.float64), minlength=k_total)
        sy = np.bincount(lab_flat, weights=(flat_idx // w).astype(np.float64), minlength=k_total)
        centers[nonzero, 3] = sx[nonzero] / counts[nonzero]
        centers[nonzero, 4] = sy[nonzero] / counts[nonzero]

    return _enforce_connectivity(labels)


def _grid_components(labels: np.ndarray) -> tuple[int, np.ndarray]:
    """4-connected components of equal-valued pixels."""
    h, w = labels.shape
    n = labels.size
    idx = np.arange(n).reshape(h, w)
    same_h = labels[:, :-1] == labels[:, 1:]
    same_v = labels[:-1, :] == labels[1:, :]
    rows = np.concatenate([idx[:, :-1][same_h], idx[:-1, :][same_v]])
    cols = np.concatenate([idx[:, 1:][same_h], idx[1:, :][same_v]])
    graph = sparse.coo_matrix(
        (np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n)
    )
    n_comp, comp = connected_components(graph, directed=False)
    return n_comp, comp.reshape(h, w)


def _enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Keep each label's largest fragment; merge the rest into their largest neighbor.

    Orphans adjacent only to other unresolved orphans wait for the next pass,
    so merges effectively flood outward from the kept fragments.  The final
    regions are relabeled 0..S-1 in raster order of their first pixel.
    """
    h, w = labels.shape
    n_comp, comp = _grid_components(labels)
    comp_flat = comp.ravel()
    sizes = np.bincount(comp_flat, minlength=n_comp)
    _, first = np.unique(comp_flat, return_index=True)
    comp_label = labels.ravel()[first]

    kept = np.zeros(n_comp, dtype=bool)
    seen: set[int] = set()
    for c in np.lexsort((first, -sizes)):  # size desc, then first pixel asc
        lab = int(comp_label[c])
        if lab not in seen:
            seen.add(lab)
            kept[c] = True

    if kept.all():
        resolved = np.arange(n_comp)
    else:
        diff_h = comp[:, :-1] != comp[:, 1:]
        diff_v = comp[:-1, :] != comp[1:, :]
        a = np.concatenate([comp[:, :-1][diff_h], comp[:-1, :][diff_v]])
        b = np.concatenate([comp[:, 1:][diff_h], comp[1:, :][diff_v]])
        key = np.unique(
            np.concatenate([a.astype(np.int64) * n_comp + b, b.astype(np.int64) * n_comp + a])
        )
        adj_u = (key // n_comp).astype(int)
        adj_v = (key % n_comp).astype(int)
        neighbor_lists: list[list[int]] = [[] for _ in range(n_comp)]
        for u, v in zip(adj_u, adj_v):
            neighbor_lists[u].append(v)

        resolved = np.full(n_comp, -1)
        resolved[kept] = np.flatnonzero(kept)
        pending = [c for c in range(n_comp) if not kept[c]]
        while pending:
            updates = []
            for c in pending:
                candidates = [nb for nb in neighbor_lists[c] if resolved[nb] >= 0]
                if candidates:
                    # largest neighbor fragment; ties to the earlier one
                    target = max(candidates, key=lambda nb: (sizes[nb], -first[nb]))
                    updates.append((c, resolved[target]))
            if not updates:
                raise AssertionError("disconnected component graph")  # grid is connected
            for c, tgt in updates:
                resolved[c] = tgt
            pending = [c for c in pending if resolved[c] < 0]

    kept_ids = np.flatnonzero(kept)
    order = np.argsort(first[kept_ids], kind="stable")
    new_label = np.empty(n_comp, dtype=np.int32)
    new_label[kept_ids[order]] = np.arange(kept_ids.size, dtype=np.int32)
    return new_label[resolved[comp_flat]].reshape(h, w)
