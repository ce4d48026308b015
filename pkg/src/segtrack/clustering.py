"""Seeded bandwidth clustering of one frame's predictions into instances.

Foreground pixels (seediness strictly above threshold) are shifted by
the predicted offsets and accumulated into a vote grid.  Grid cells
whose 3x3 neighborhood collects more than ``min_neighbor_votes`` votes
become candidate centers, processed in descending order of founding
seediness.  Each candidate claims the pixels whose shifted positions
score above the kernel threshold; boundary pixels may be re-assigned to
a later candidate only when they score strictly higher there, the new
cluster is large enough, and less than half of it was already claimed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _backend
from .fields import BandwidthField, LabelImage, NormalizedPoint, ScalarField, VectorField
from .geometry import BANDWIDTH_SCALE_WEIGHT, points_to_pixels, shift_pixels


@dataclass(frozen=True)
class ClusterConfig:
    seediness_threshold: float = 0.5
    kernel_accept_threshold: float = 0.5
    min_neighbor_votes: int = 5  # strict "more than"
    min_mask_size: int = 2
    w_s: float = BANDWIDTH_SCALE_WEIGHT

    def __post_init__(self):
        if not (0.0 < self.seediness_threshold < 1.0):
            raise ValueError("seediness_threshold must be in (0, 1)")
        if not (0.0 < self.kernel_accept_threshold < 1.0):
            raise ValueError("kernel_accept_threshold must be in (0, 1)")
        if self.min_mask_size < 1:
            raise ValueError("min_mask_size must be >= 1")


def min_mask_size_from_training(mask_sizes, default: int = 2) -> int:
    """Half the 1% percentile of training mask sizes, else the default."""
    sizes = np.asarray(list(mask_sizes), dtype=np.float64)
    if sizes.size == 0:
        return default
    return max(1, int(np.percentile(sizes, 1) / 2))


@dataclass
class ClusterOutcome:
    labels: LabelImage
    centers: dict[int, NormalizedPoint]
    scores: dict[int, float]
    rejected: int = 0


def smooth_bandwidths(bw: BandwidthField) -> BandwidthField:
    """3x3 box mean per component; borders average the valid window."""
    smoothed = np.empty_like(bw.values)
    ones = np.ones_like(bw.values[0])
    norm = ndimage.uniform_filter(ones, size=3, mode="constant", cval=0.0)
    for dim in range(2):
        acc = ndimage.uniform_filter(bw.values[dim], size=3, mode="constant", cval=0.0)
        smoothed[dim] = acc / norm
    return BandwidthField(values=np.clip(smoothed, 0.0, 1.0))


def select_foreground(seediness: ScalarField, cfg: ClusterConfig) -> np.ndarray:
    """Boolean mask of pixels strictly above the seediness threshold."""
    return seediness.values > cfg.seediness_threshold


def find_candidate_centers(
    ex: np.ndarray,
    ey: np.ndarray,
    seed_values: np.ndarray,
    h: int,
    w: int,
    cfg: ClusterConfig,
) -> tuple[list[tuple[int, int]], np.ndarray, np.ndarray]:
    """Vote-grid candidate detection.

    ``ex``/``ey`` are the shifted positions of the foreground pixels and
    ``seed_values`` their seediness scores.  Returns the candidate cells
    ordered by founding seediness (descending, (row, col) tie-break), the
    per-cell founding scores, and the per-cell best voting pixel index.
    """
    rows, cols, in_frame = points_to_pixels(ex, ey, h, w)
    keep = np.nonzero(in_frame)[0]
    counts, best_seed, best_pix = _backend.accumulate_votes(
        np.ascontiguousarray(rows[keep]),
        np.ascontiguousarray(cols[keep]),
        np.ascontiguousarray(seed_values[keep]),
        h,
        w,
    )
    # re-base voter indices onto the full foreground arrays
    voted = best_pix >= 0
    best_pix[voted] = keep[best_pix[voted]]

    neigh = ndimage.uniform_filter(counts.astype(np.float64), size=3, mode="constant")
    neigh = np.rint(neigh * 9.0).astype(np.int64)
    cand_mask = neigh > cfg.min_neighbor_votes
    founding = ndimage.maximum_filter(best_seed, size=3, mode="constant", cval=-1.0)

    cand_rows, cand_cols = np.nonzero(cand_mask)
    scores = founding[cand_rows, cand_cols]
    # founding-score ties (frequent with near-binary seediness) break by
    # the cell's own vote count, then (row, col) for determinism
    own_votes = counts[cand_rows, cand_cols]
    order = np.lexsort((cand_cols, cand_rows, -own_votes, -scores))
    candidates = [(int(cand_rows[i]), int(cand_cols[i])) for i in order]
    return candidates, founding, best_pix


def _neighborhood_best_pixel(
    best_pix: np.ndarray, best_seed_like: np.ndarray, r: int, c: int
) -> int:
    """Best voting pixel across the 3x3 neighborhood of a grid cell."""
    h, w = best_pix.shape
    best = -1
    best_val = -1.0
    for rr in range(max(0, r - 1), min(h, r + 2)):
        for cc in range(max(0, c - 1), min(w, c + 2)):
            if best_pix[rr, cc] >= 0 and best_seed_like[rr, cc] >= best_val:
                best_val = best_seed_like[rr, cc]
                best = int(best_pix[rr, cc])
    return best


def cluster_frame(
    off: VectorField,
    bw: BandwidthField,
    seediness: ScalarField,
    cfg: ClusterConfig = ClusterConfig(),
) -> ClusterOutcome:
    """Full clustering step for one frame; deterministic."""
    h, w = seediness.height, seediness.width
    fg_mask = select_foreground(seediness, cfg)
    fg_rows, fg_cols = np.nonzero(fg_mask)
    labels_out = np.zeros((h, w), dtype=np.int64)
    if fg_rows.size == 0:
        return ClusterOutcome(LabelImage(labels_out), {}, {}, 0)

    bw_smooth = smooth_bandwidths(bw)
    ex, ey = shift_pixels(off, fg_mask)
    seed_fg = seediness.values[fg_mask]
    candidates, founding, best_pix = find_candidate_centers(ex, ey, seed_fg, h, w, cfg)

    # per-cell max voter seediness, used to locate a fallback bandwidth
    # pixel when the candidate cell itself is background
    seed_at_best = np.full((h, w), -1.0)
    voted = best_pix >= 0
    seed_at_best[voted] = seed_fg[best_pix[voted]]

    assignment = np.zeros(fg_rows.size, dtype=np.int64)
    best_score = np.zeros(fg_rows.size, dtype=np.float64)
    centers: dict[int, NormalizedPoint] = {}
    scores: dict[int, float] = {}
    rejected = 0
    next_label = 0

    for cr, cc in candidates:
        if labels_out[cr, cc] != 0:
            continue  # candidate consumed by an accepted mask
        if fg_mask[cr, cc]:
            s_raw = bw_smooth.values[:, cr, cc]
        else:
            pix = _neighborhood_best_pixel(best_pix, seed_at_best, cr, cc)
            if pix < 0:
                rejected += 1
                continue
            s_raw = bw_smooth.values[:, fg_rows[pix], fg_cols[pix]]
        s = np.exp(cfg.w_s * s_raw)
        cx, cy = cc / w, cr / h
        d = _backend.kernel_scores(cx, cy, s[0], s[1], ex, ey)

        accept = d > cfg.kernel_accept_threshold
        claim = accept & ((assignment == 0) | (d > best_score))
        n_claim = int(claim.sum())
        if n_claim < cfg.min_mask_size:
            rejected += 1
            continue
        stolen = claim & (assignment != 0)
        if 2 * int(stolen.sum()) >= n_claim:
            # too much of the new cluster was already claimed: keep only
            # the unassigned part
            claim = accept & (assignment == 0)
            n_claim = int(claim.sum())
            if n_claim < cfg.min_mask_size:
                rejected += 1
                continue
        next_label += 1
        assignment[claim] = next_label
        best_score[claim] = d[claim]
        # full resync so pixels stolen from earlier clusters move too
        labels_out[fg_rows, fg_cols] = assignment
        centers[next_label] = NormalizedPoint(x=cx, y=cy)
        scores[next_label] = float(founding[cr, cc])

    # re-assignment may have nibbled an earlier cluster below the size
    # floor; drop such remnants so every surviving mask meets it
    kept, counts = np.unique(assignment[assignment > 0], return_counts=True)
    for lab in kept[counts < cfg.min_mask_size]:
        assignment[assignment == lab] = 0
        centers.pop(int(lab))
        scores.pop(int(lab))
        rejected += 1
    labels_out[fg_rows, fg_cols] = assignment
    return ClusterOutcome(LabelImage(labels_out), centers, scores, rejected)
