"""2-D grid resampling: bilinear for real-valued maps, nearest for binary ones.

Both use pixel-area (half-pixel center) coordinate mapping, so results do
not depend on any external imaging library.  Nearest-neighbor preserves
binarity exactly; bilinear output is a convex combination of the input and
therefore stays inside its value range up to rounding.
"""

from __future__ import annotations

import numpy as np

from .errors import CamforgeError

_MOD = "resample"


def _check_target(out_h: int, out_w: int) -> None:
    if out_h < 1 or out_w < 1:
        raise CamforgeError(_MOD, "zero_resize", f"target size must be >= 1x1, got {out_h}x{out_w}")


def _source_centers(n_out: int, n_in: int) -> np.ndarray:
    # half-pixel convention: dst center i maps to (i + 0.5) * n_in/n_out - 0.5
    return np.clip((np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5, 0.0, n_in - 1.0)


def resize_bilinear(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinearly resample a (H, W) float array to (out_h, out_w)."""
    _check_target(out_h, out_w)
    grid = np.asarray(grid, dtype=np.float64)
    h, w = grid.shape

    ys = _source_centers(out_h, h)
    xs = _source_centers(out_w, w)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    ty = (ys - y0)[:, None]
    tx = (xs - x0)[None, :]

    top = grid[np.ix_(y0, x0)] * (1.0 - tx) + grid[np.ix_(y0, x1)] * tx
    bot = grid[np.ix_(y1, x0)] * (1.0 - tx) + grid[np.ix_(y1, x1)] * tx
    return top * (1.0 - ty) + bot * ty


def resize_nearest(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resample of a (H, W) array to (out_h, out_w)."""
    _check_target(out_h, out_w)
    grid = np.asarray(grid)
    h, w = grid.shape
    ys = np.minimum(((np.arange(out_h) + 0.5) * (h / out_h)).astype(np.intp), h - 1)
    xs = np.minimum(((np.arange(out_w) + 0.5) * (w / out_w)).astype(np.intp), w - 1)
    return grid[np.ix_(ys, xs)].copy()
