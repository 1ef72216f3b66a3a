"""PNG output helpers: label maps, overlays, and debug renders."""

from __future__ import annotations

import numpy as np
from PIL import Image


def color_table(n: int = 256) -> np.ndarray:
    """Deterministic (n, 3) uint8 palette; entry 0 is black.

    Bit-reversal construction: label bits are distributed across the high
    bits of the three channels, so nearby labels get visually distant colors.
    """
    table = np.zeros((n, 3), dtype=np.uint8)
    for i in range(n):
        c = i
        r = g = b = 0
        for j in range(8):
            r |= ((c >> 0) & 1) << (7 - j)
            g |= ((c >> 1) & 1) << (7 - j)
            b |= ((c >> 2) & 1) << (7 - j)
            c >>= 3
        table[i] = (r, g, b)
    return table


_PALETTE = color_table()


def overlay(image: np.ndarray, labeling: np.ndarray, palette: np.ndarray = None) -> np.ndarray:
    """Blend instance colors into the image at 50% alpha.

    Background pixels (label 0) are left untouched, so an all-background
    labeling returns the source image unchanged.
    """
    image = np.asarray(image)
    labeling = np.asarray(labeling)
    if image.shape[:2] != labeling.shape:
        raise ValueError(f"image {image.shape[:2]} does not match labeling {labeling.shape}")
    if palette is None:
        palette = _PALETTE
    out = image.copy()
    fg = labeling > 0
    if fg.any():
        colors = palette[labeling[fg] % len(palette)]
        out[fg] = ((out[fg].astype(np.uint16) + colors.astype(np.uint16)) // 2).astype(np.uint8)
    return out


def write_label_png(path, labeling: np.ndarray) -> None:
    """Write a labeling as a 16-bit grayscale PNG (pixel value = label)."""
    labeling = np.asarray(labeling)
    if labeling.min() < 0 or labeling.max() > 0xFFFF:
        raise ValueError("labels must fit in uint16")
    Image.fromarray(labeling.astype(np.uint16)).save(path, format="PNG")


def read_label_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im).astype(np.int32)


def write_rgb_png(path, image: np.ndarray) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def write_gray_png(path, values: np.ndarray) -> None:
    """Write values scaled from [0, max] to 8-bit grayscale."""
    values = np.asarray(values, dtype=np.float64)
    top = values.max()
    scaled = values / top if top > 0 else values
    Image.fromarray((scaled * 255.0 + 0.5).astype(np.uint8), mode="L").save(path, format="PNG")


def superpixel_boundaries(image: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Copy of the image with superpixel boundaries marked in black."""
    image = np.asarray(image)
    labels = np.asarray(labels)
    out = image.copy()
    edge = np.zeros(labels.shape, dtype=bool)
    edge[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    edge[1:, :] |= labels[1:, :] != labels[:-1, :]
    out[edge] = 0
    return out
