"""Pure-NumPy implementations of the hot kernels.

Mirrors the API of the optional compiled module ``segtrack._speedups``;
``segtrack._backend`` picks one of the two at import time.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"


def medoid_argmin(rows: np.ndarray, cols: np.ndarray) -> int:
    """Index of the member minimizing the summed Euclidean distance.

    Callers pass coordinates in canonical (row, col) sorted order so the
    result is independent of the original pixel enumeration; the first
    strict minimum wins, which is the lexicographic tie-break.
    """
    n = rows.shape[0]
    sums = np.zeros(n, dtype=np.float64)
    # chunked pairwise distances, keeps memory at O(chunk * n)
    chunk = max(1, int(4e6 // max(n, 1)))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        dr = rows[start:stop, None] - rows[None, :]
        dc = cols[start:stop, None] - cols[None, :]
        sums[start:stop] = np.sqrt(dr * dr + dc * dc).sum(axis=1)
    return int(np.argmin(sums))


def kernel_scores(
    cx: float,
    cy: float,
    sx: float,
    sy: float,
    ex: np.ndarray,
    ey: np.ndarray,
) -> np.ndarray:
    """Elliptical Gaussian kernel of points (ex, ey) around center (cx, cy)."""
    dx = cx - ex
    dy = cy - ey
    return np.exp(-(dx * dx) / sx - (dy * dy) / sy)


def accumulate_votes(
    vrows: np.ndarray,
    vcols: np.ndarray,
    seed: np.ndarray,
    h: int,
    w: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Accumulate center votes into an H x W grid.

    Returns (counts, best_seed, best_pix): vote counts per cell, the
    highest seediness among a cell's voters, and that voter's index into
    the input arrays (-1 where no votes; seediness ties keep the later
    voter, matching the compiled backend).
    """
    counts = np.zeros((h, w), dtype=np.int64)
    best_seed = np.full((h, w), -1.0, dtype=np.float64)
    best_pix = np.full((h, w), -1, dtype=np.int64)
    if vrows.size == 0:
        return counts, best_seed, best_pix
    flat = vrows * w + vcols
    np.add.at(counts.ravel(), flat, 1)
    order = np.lexsort((seed, flat))
    flat_sorted = flat[order]
    last = np.nonzero(np.r_[flat_sorted[1:] != flat_sorted[:-1], True])[0]
    winners = order[last]
    best_seed.ravel()[flat[winners]] = seed[winners]
    best_pix.ravel()[flat[winners]] = winners
    return counts, best_seed, best_pix
