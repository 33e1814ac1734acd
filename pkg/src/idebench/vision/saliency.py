"""Iso-feature suppression saliency, bounding-box search and patch clipping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels

DEFAULT_BASE = 8.0
DEFAULT_THRESHOLD = 0.5


class NoObjectError(LookupError):
    """No interior saliency value reached the threshold."""


@dataclass
class SaliencyMap:
    values: np.ndarray
    base: float
    valid: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class BBox:
    row_min: int
    row_max: int
    col_min: int
    col_max: int

    def __post_init__(self):
        if not (0 <= self.row_min <= self.row_max and 0 <= self.col_min <= self.col_max):
            raise ValueError(f"invalid bbox {self}")

    @classmethod
    def from_list(cls, b) -> "BBox":
        return cls(*(int(v) for v in b))

    def as_list(self) -> list[int]:
        return [self.row_min, self.row_max, self.col_min, self.col_max]

    @property
    def center(self) -> tuple[float, float]:
        return (self.row_min + self.row_max) / 2.0, (self.col_min + self.col_max) / 2.0

    def area(self) -> int:
        return (self.row_max - self.row_min + 1) * (self.col_max - self.col_min + 1)

    def contains(self, r: int, c: int) -> bool:
        return self.row_min <= r <= self.row_max and self.col_min <= c <= self.col_max


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of inclusive pixel boxes."""
    r0, r1 = max(a.row_min, b.row_min), min(a.row_max, b.row_max)
    c0, c1 = max(a.col_min, b.col_min), min(a.col_max, b.col_max)
    inter = max(0, r1 - r0 + 1) * max(0, c1 - c0 + 1)
    return inter / (a.area() + b.area() - inter)


def saliency(image, base: float = DEFAULT_BASE) -> SaliencyMap:
    """``s = base - sum over the 8 neighbours of (1 - ||x - x'||_2)`` on interior pixels.

    The one-pixel border has an incomplete neighbourhood and is marked invalid
    (its value is left at 0).
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    h, w = img.shape[:2]
    if h < 3 or w < 3:
        raise ValueError("saliency needs an image of at least 3x3 pixels")
    values = kernels.saliency(img, base)
    valid = np.zeros((h, w), dtype=bool)
    valid[1:-1, 1:-1] = True
    return SaliencyMap(values, float(base), valid)


def locate(smap: SaliencyMap, threshold: float = DEFAULT_THRESHOLD) -> BBox:
    """Tightest box around all valid cells whose saliency is at least ``threshold``.

    Saliency peaks along the object's outline, so the hull of the salient cells
    bounds the object.
    """
    hot = smap.valid & (smap.values >= threshold)
    if not hot.any():
        raise NoObjectError(f"no saliency value reaches {threshold}")
    rows = np.nonzero(hot.any(axis=1))[0]
    cols = np.nonzero(hot.any(axis=0))[0]
    return BBox(int(rows[0]), int(rows[-1]), int(cols[0]), int(cols[-1]))


def clip_patch(image, bbox: BBox, patch_size: int = 32) -> np.ndarray:
    """Square window centred on the box, shifted (never shrunk) to stay inside the image."""
    img = np.asarray(image)
    h, w = img.shape[:2]
    if h < patch_size or w < patch_size:
        raise ValueError("image smaller than the patch")
    cr, cc = bbox.center
    top = int(np.floor(cr - patch_size / 2 + 0.5))
    left = int(np.floor(cc - patch_size / 2 + 0.5))
    top = min(max(top, 0), h - patch_size)
    left = min(max(left, 0), w - patch_size)
    return img[top:top + patch_size, left:left + patch_size].copy()
