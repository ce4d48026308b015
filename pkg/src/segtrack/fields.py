"""Immutable per-frame field containers.

All fields live on a canonical H x W pixel grid.  Normalized coordinates
use ``x = col / W`` and ``y = row / H``; this convention is fixed here and
used by every other module (kernel, clustering, linking).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _as_readonly(values, dtype=np.float64):
    arr = np.ascontiguousarray(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class NormalizedPoint:
    """Pixel position as fractions of image width/height."""

    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    @property
    def in_frame(self) -> bool:
        return 0.0 <= self.x < 1.0 and 0.0 <= self.y < 1.0


@dataclass(frozen=True)
class VectorField:
    """2 x H x W displacement field in normalized coordinates.

    Plane 0 holds x-components, plane 1 holds y-components.  Values come
    from a tanh activation and must stay in [-1, 1].
    """

    values: np.ndarray

    def __post_init__(self):
        arr = _as_readonly(self.values)
        if arr.ndim != 3 or arr.shape[0] != 2:
            raise ValueError(f"expected (2, H, W), got {arr.shape}")
        if np.abs(arr).max(initial=0.0) > 1.0 + 1e-9:
            raise ValueError("vector field components must lie in [-1, 1]")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class BandwidthField:
    """2 x H x W raw clustering bandwidths (sigmoid outputs in [0, 1])."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_readonly(self.values)
        if arr.ndim != 3 or arr.shape[0] != 2:
            raise ValueError(f"expected (2, H, W), got {arr.shape}")
        if arr.min(initial=0.0) < -1e-9 or arr.max(initial=0.0) > 1.0 + 1e-9:
            raise ValueError("bandwidths must lie in [0, 1]")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class ScalarField:
    """H x W scalar map in [0, 1] (seediness / foreground score)."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_readonly(self.values)
        if arr.ndim != 2:
            raise ValueError(f"expected (H, W), got {arr.shape}")
        if arr.min(initial=0.0) < -1e-9 or arr.max(initial=0.0) > 1.0 + 1e-9:
            raise ValueError("scalar field values must lie in [0, 1]")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LabelImage:
    """H x W integer instance labels, 0 = background.

    Labels need not be contiguous; each positive label present in the
    image forms a non-empty pixel set by construction.
    """

    labels: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.labels)
        if arr.ndim != 2:
            raise ValueError(f"expected (H, W), got {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("labels must be integers")
        if arr.min(initial=0) < 0:
            raise ValueError("labels must be non-negative")
        arr = arr.astype(np.int64, copy=False)
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def instance_ids(self) -> np.ndarray:
        ids = np.unique(self.labels)
        return ids[ids > 0]

    def pixels(self, label: int) -> tuple[np.ndarray, np.ndarray]:
        rows, cols = np.nonzero(self.labels == label)
        return rows, cols


@dataclass(frozen=True)
class SegPrediction:
    """One frame's segmentation outputs: offsets, bandwidths, seediness."""

    offsets: VectorField
    bandwidths: BandwidthField
    seediness: ScalarField

    def __post_init__(self):
        shapes = {
            (self.offsets.height, self.offsets.width),
            (self.bandwidths.height, self.bandwidths.width),
            (self.seediness.height, self.seediness.width),
        }
        if len(shapes) != 1:
            raise ValueError(f"inconsistent field shapes: {shapes}")


@dataclass(frozen=True)
class PredictionSet:
    """All network outputs for a frame pair (t, t-1).

    ``track`` maps pixels of frame t onto their object center at t-1.
    """

    seg_t: SegPrediction
    seg_tm1: SegPrediction
    track: VectorField

    def __post_init__(self):
        shapes = {
            (self.seg_t.seediness.height, self.seg_t.seediness.width),
            (self.seg_tm1.seediness.height, self.seg_tm1.seediness.width),
            (self.track.height, self.track.width),
        }
        if len(shapes) != 1:
            raise ValueError(f"inconsistent frame shapes: {shapes}")

    @property
    def height(self) -> int:
        return self.track.height

    @property
    def width(self) -> int:
        return self.track.width
