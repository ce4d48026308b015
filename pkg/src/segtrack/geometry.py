"""Geometric substrate: coordinate grid, Gaussian kernel, pixel shifting.

Convention (applied uniformly across the package): ``x = col / W`` and
``y = row / H``.  Normalization divides by W and H, not W-1/H-1, so crops
of equal size share one scale.  Shifted positions are never clamped to
[0, 1]; out-of-frame votes are dropped by the consumers.
"""

from __future__ import annotations

import numpy as np

from . import _backend
from .fields import NormalizedPoint, VectorField

#: Exponential scaling weight applied to mean bandwidths, shared by the
#: loss and the clustering step.
BANDWIDTH_SCALE_WEIGHT = -10.0


def normalize_coords(row: int, col: int, h: int, w: int) -> NormalizedPoint:
    """Map an integer pixel index to the canonical normalized grid."""
    if not (0 <= row < h and 0 <= col < w):
        raise ValueError(f"pixel ({row}, {col}) outside {h}x{w} image")
    return NormalizedPoint(x=col / w, y=row / h)


def coordinate_grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized (x, y) position planes of shape H x W."""
    ys, xs = np.meshgrid(
        np.arange(h, dtype=np.float64) / h,
        np.arange(w, dtype=np.float64) / w,
        indexing="ij",
    )
    return xs, ys


def scale_bandwidth(mean_bw, w_s: float = BANDWIDTH_SCALE_WEIGHT) -> np.ndarray:
    """Exponentially scale a raw mean bandwidth vector: exp(w_s * s)."""
    mean_bw = np.asarray(mean_bw, dtype=np.float64)
    if mean_bw.min(initial=0.0) < -1e-9 or mean_bw.max(initial=0.0) > 1.0 + 1e-9:
        raise ValueError("raw bandwidths must lie in [0, 1]")
    return np.exp(w_s * mean_bw)


def gaussian_distance(center: NormalizedPoint, point: NormalizedPoint, bw) -> float:
    """Elliptical Gaussian kernel score in (0, 1]; 1 iff center == point."""
    bw = np.asarray(bw, dtype=np.float64)
    if bw[0] <= 0 or bw[1] <= 0:
        raise ValueError("bandwidth components must be positive")
    dx = center.x - point.x
    dy = center.y - point.y
    return float(np.exp(-dx * dx / bw[0] - dy * dy / bw[1]))


def shift_pixels(
    field: VectorField,
    mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Add offsets to normalized pixel positions.

    Returns (ex, ey) arrays for the selected pixels (all pixels when
    ``mask`` is None, flattened row-major).  Results may fall outside
    [0, 1) and are intentionally not clamped.
    """
    h, w = field.height, field.width
    xs, ys = coordinate_grid(h, w)
    ex = xs + field.values[0]
    ey = ys + field.values[1]
    if mask is not None:
        return ex[mask], ey[mask]
    return ex.ravel(), ey.ravel()


def round_half_down(values: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties toward the lower index."""
    return np.ceil(np.asarray(values) - 0.5).astype(np.int64)


def points_to_pixels(
    ex: np.ndarray, ey: np.ndarray, h: int, w: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Convert normalized points to pixel indices.

    Returns (rows, cols, in_frame); out-of-frame points keep their
    rounded indices but are flagged False.
    """
    cols = round_half_down(np.asarray(ex, dtype=np.float64) * w)
    rows = round_half_down(np.asarray(ey, dtype=np.float64) * h)
    in_frame = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    return rows, cols, in_frame


def medoid(pixels) -> tuple[int, int]:
    """The member of a pixel set minimizing summed Euclidean distance.

    Ties break to the lowest (row, col); the result is invariant under
    permutation of the input order.
    """
    pts = np.asarray(sorted((int(r), int(c)) for r, c in pixels), dtype=np.float64)
    if pts.size == 0:
        raise ValueError("medoid of an empty pixel set")
    idx = _backend.medoid_argmin(
        np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1])
    )
    return int(pts[idx, 0]), int(pts[idx, 1])


def medoid_of_arrays(rows: np.ndarray, cols: np.ndarray) -> tuple[int, int]:
    """Medoid from parallel row/col arrays (same contract as ``medoid``)."""
    if rows.size == 0:
        raise ValueError("medoid of an empty pixel set")
    order = np.lexsort((cols, rows))
    r = np.ascontiguousarray(rows[order], dtype=np.float64)
    c = np.ascontiguousarray(cols[order], dtype=np.float64)
    idx = _backend.medoid_argmin(r, c)
    return int(r[idx]), int(c[idx])
