"""Inference pipeline: threshold two score maps, union, keep the largest
connected region, and emit one bounding box in image coordinates.

Boxes are half-open continuous rectangles [x0, x1) x [y0, y1); conversion
to inclusive-corner formats happens only at I/O boundaries.  Box extraction
runs on the CAM grid and the corners are scaled into image coordinates, so
no map upsampling is involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .cam_core import BinaryMap, ScoreMap
from .errors import CamforgeError

_MOD = "localize"

DEFAULT_THETA = 0.3
DEFAULT_CONNECTIVITY = 8

_STRUCTURES = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8),
    8: np.ones((3, 3), dtype=np.uint8),
}


@dataclass(frozen=True)
class BoundingBox:
    """Half-open rectangle in continuous image coordinates."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise CamforgeError(
                _MOD, "bad_box",
                f"box must have positive extent, got ({self.x0}, {self.y0}, {self.x1}, {self.y1})")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)


def threshold_map(s: ScoreMap, theta: float) -> BinaryMap:
    """Mark pixels strictly above ``theta`` times the map maximum.

    Raw values are compared against theta * max with no shift, so a map
    whose maximum is <= 0 yields an all-zero result.
    """
    if not 0.0 < theta < 1.0:
        raise CamforgeError(_MOD, "bad_theta", f"theta must be in (0, 1), got {theta}")
    peak = float(s.data.max())
    if peak <= 0.0:
        return BinaryMap(np.zeros(s.dims, dtype=np.uint8))
    return BinaryMap((s.data > theta * peak).astype(np.uint8))


def union_maps(a: BinaryMap, b: BinaryMap) -> BinaryMap:
    """Pixelwise OR of two binary maps."""
    if a.dims != b.dims:
        raise CamforgeError(_MOD, "dim_mismatch", f"union needs equal dims, got {a.dims} and {b.dims}")
    return BinaryMap(np.logical_or(a.bits, b.bits).astype(np.uint8))


def largest_region(m: BinaryMap, connectivity: int = DEFAULT_CONNECTIVITY) -> BinaryMap:
    """Keep exactly one maximum-cardinality connected component of 1s.

    Ties are broken toward the component whose first pixel comes earliest in
    row-major scan order.  An empty map is returned unchanged.
    """
    if connectivity not in _STRUCTURES:
        raise CamforgeError(_MOD, "bad_connectivity", f"connectivity must be 4 or 8, got {connectivity}")
    labels, n = ndimage.label(m.bits, structure=_STRUCTURES[connectivity])
    if n == 0:
        return BinaryMap(np.zeros(m.dims, dtype=np.uint8))
    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=n + 1)
    first = np.full(n + 1, flat.size, dtype=np.intp)
    np.minimum.at(first, flat, np.arange(flat.size, dtype=np.intp))
    best = max(range(1, n + 1), key=lambda lab: (sizes[lab], -first[lab]))
    return BinaryMap((labels == best).astype(np.uint8))


def region_bbox(m: BinaryMap, image_dims: tuple[int, int]) -> BoundingBox:
    """Tight half-open box around the set pixels, scaled to image coordinates.

    ``image_dims`` is (height, width); the scale factors are W_img/W_map and
    H_img/H_map.
    """
    rows, cols = np.nonzero(m.bits)
    if rows.size == 0:
        raise CamforgeError(_MOD, "empty_region", "cannot box an empty map")
    img_h, img_w = image_dims
    sy = img_h / m.dims[0]
    sx = img_w / m.dims[1]
    return BoundingBox(
        x0=float(cols.min()) * sx,
        y0=float(rows.min()) * sy,
        x1=float(cols.max() + 1) * sx,
        y1=float(rows.max() + 1) * sy,
    )


def localize(
    s_l: ScoreMap,
    s_f: ScoreMap,
    theta: float = DEFAULT_THETA,
    connectivity: int = DEFAULT_CONNECTIVITY,
    image_dims: tuple[int, int] | None = None,
) -> tuple[BoundingBox, bool]:
    """Full pipeline over a pair of score maps.

    Thresholds both maps, unions the results, keeps the largest connected
    region, and boxes it.  If the union is empty the full-image box is
    returned instead of failing; the second return value flags that
    fallback.
    """
    if s_l.dims != s_f.dims:
        raise CamforgeError(_MOD, "dim_mismatch", f"score maps must share dims, got {s_l.dims} and {s_f.dims}")
    if image_dims is None:
        image_dims = s_l.dims
    merged = union_maps(threshold_map(s_l, theta), threshold_map(s_f, theta))
    if merged.count() == 0:
        img_h, img_w = image_dims
        return BoundingBox(0.0, 0.0, float(img_w), float(img_h)), True
    region = largest_region(merged, connectivity)
    return region_bbox(region, image_dims), False
