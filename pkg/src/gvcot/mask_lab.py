"""Edit-region masks: rasterization, cleanup, overlays and difference extraction.

Morphology conventions: holes are 4-connected background components that do
not touch the image border; speckles are 8-connected foreground components.
Dilation treats pixels outside the image as background and erosion treats
them as foreground, so objects touching the border are not eaten away.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .core import BBox, BinaryMask, RasterImage, round_half_away
from .errors import DimensionMismatch

_FOUR = ndimage.generate_binary_structure(2, 1)
_EIGHT = ndimage.generate_binary_structure(2, 2)


@dataclass(frozen=True)
class OverlayStyle:
    color: tuple[int, int, int] = (255, 0, 255)
    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if len(self.color) != 3 or any(not 0 <= c <= 255 for c in self.color):
            raise ValueError("color must be three 8-bit values")


@dataclass(frozen=True)
class MorphParams:
    min_speckle_area: int = 64
    smooth_radius: int = 2
    diff_threshold: int = 30

    def __post_init__(self):
        if min(self.min_speckle_area, self.smooth_radius, self.diff_threshold) < 0:
            raise ValueError("morphology parameters must be non-negative")


def rasterize_boxes(boxes: Sequence[BBox], w: int, h: int) -> BinaryMask:
    bits = np.zeros((h, w), dtype=bool)
    for b in boxes:
        bits[max(b.y1, 0):min(b.y2, h), max(b.x1, 0):min(b.x2, w)] = True
    return BinaryMask(bits)


def fill_holes(m: BinaryMask) -> BinaryMask:
    return BinaryMask(ndimage.binary_fill_holes(m.bits, structure=_FOUR))


def remove_speckles(m: BinaryMask, min_area: int) -> BinaryMask:
    if min_area <= 0:
        return m
    labels, n = ndimage.label(m.bits, structure=_EIGHT)
    if n == 0:
        return m
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_area
    keep[0] = False
    return BinaryMask(keep[labels])


def disc(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return (xx * xx + yy * yy) <= r * r


def dilate(bits: np.ndarray, se: np.ndarray) -> np.ndarray:
    return ndimage.binary_dilation(bits, structure=se, border_value=0)


def erode(bits: np.ndarray, se: np.ndarray) -> np.ndarray:
    return ndimage.binary_erosion(bits, structure=se, border_value=1)


def smooth_boundary(m: BinaryMask, radius: int) -> BinaryMask:
    """Closing followed by opening with a disc of the given radius."""
    if radius <= 0:
        return m
    se = disc(radius)
    closed = erode(dilate(m.bits, se), se)
    opened = dilate(erode(closed, se), se)
    return BinaryMask(opened)


def clean_mask(m: BinaryMask, p: MorphParams = MorphParams()) -> BinaryMask:
    """Post-process an external segmentation: fill, despeckle, smooth, fill again."""
    m = fill_holes(m)
    m = remove_speckles(m, p.min_speckle_area)
    m = smooth_boundary(m, p.smooth_radius)
    return fill_holes(remove_speckles(m, p.min_speckle_area))


def _check_same(a_shape, b_shape, what: str):
    if tuple(a_shape) != tuple(b_shape):
        raise DimensionMismatch(f"{what}: {tuple(a_shape)} vs {tuple(b_shape)}")


def diff_mask(src: RasterImage, cot: RasterImage, p: MorphParams = MorphParams()) -> BinaryMask:
    _check_same(src.shape, cot.shape, "diff_mask")
    delta = np.abs(src.data.astype(np.int16) - cot.data.astype(np.int16)).max(axis=2)
    m = BinaryMask(delta > p.diff_threshold)
    return fill_holes(remove_speckles(m, p.min_speckle_area))


def compose_overlay(src: RasterImage, m: BinaryMask, style: OverlayStyle = OverlayStyle()) -> RasterImage:
    if src.channels != 3:
        raise DimensionMismatch("overlays need an RGB source")
    _check_same(src.shape[:2], m.shape, "compose_overlay")
    out = src.data.copy()
    sel = m.bits
    color = np.asarray(style.color, dtype=np.float64)
    blended = (1.0 - style.alpha) * src.data[sel].astype(np.float64) + style.alpha * color
    out[sel] = np.clip(round_half_away(blended), 0, 255).astype(np.uint8)
    return RasterImage(out)


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    _check_same(a.shape, b.shape, "mask_iou")
    union = np.logical_or(a.bits, b.bits).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a.bits, b.bits).sum() / union)


def mask_to_png_array(m: BinaryMask) -> np.ndarray:
    return np.where(m.bits, 255, 0).astype(np.uint8)


def mask_from_png_array(arr: np.ndarray) -> BinaryMask:
    arr = np.asarray(arr)
    if arr.ndim == 3:
        arr = arr.max(axis=2)
    return BinaryMask(arr >= 128)
