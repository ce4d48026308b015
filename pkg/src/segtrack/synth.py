"""Synthetic sequences with known lineage, plus ideal prediction tensors.

Elliptical cells perform a random walk and occasionally divide.  The
companion ``ideal_predictions`` inverts the embedding semantics: offsets
point every instance pixel at its medoid, bandwidths are sized so the
kernel's 0.5 contour covers the cell, and the seediness map equals the
kernel target.  Feeding these tensors through clustering and linking
must reproduce the ground truth exactly, which is the backbone of the
end-to-end tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .fields import (
    BandwidthField,
    LabelImage,
    PredictionSet,
    ScalarField,
    SegPrediction,
    VectorField,
)
from .geometry import BANDWIDTH_SCALE_WEIGHT, medoid_of_arrays
from .linking import Track, TrackGraph

#: extra kernel coverage so boundary pixels stay above the 0.5 contour
COVER_MARGIN = 1.4


@dataclass(frozen=True)
class SynthConfig:
    h: int = 256
    w: int = 256
    n_cells: int = 10
    frames: int = 10
    radius_min: float = 4.0
    radius_max: float = 8.0
    step_sigma: float = 2.0
    division_prob: float = 0.0
    seed: int = 0
    margin: float = COVER_MARGIN

    def __post_init__(self):
        if self.n_cells < 1 or self.frames < 1:
            raise ValueError("need at least one cell and one frame")
        if self.radius_min < 2.0 or self.radius_max < self.radius_min:
            raise ValueError("invalid radius range (min 2 px)")


@dataclass
class SynthSequence:
    images: list[np.ndarray]
    labels: list[LabelImage]
    graph: TrackGraph

    def links_for_pair(self, t: int) -> dict[int, int]:
        """Label at frame t -> predecessor label at t-1 (parents included)."""
        links: dict[int, int] = {}
        by_id = self.graph.by_id()
        for track_id, label in self.graph.frame_labels[t].items():
            tr = by_id[track_id]
            if tr.start_frame < t:
                links[label] = self.graph.frame_labels[t - 1][track_id]
            elif tr.parent_id:
                parent = by_id[tr.parent_id]
                if parent.end_frame == t - 1:
                    links[label] = self.graph.frame_labels[t - 1][tr.parent_id]
        return links


@dataclass
class _Cell:
    track_id: int
    cx: float
    cy: float
    ax: float
    ay: float


def _min_separation(a: _Cell, b: _Cell, margin: float) -> float:
    return margin * (max(a.ax, a.ay) + max(b.ax, b.ay)) + 4.0


def _fits(cell: _Cell, others: list[_Cell], h: int, w: int, margin: float) -> bool:
    r = max(cell.ax, cell.ay)
    if not (r + 2 <= cell.cx <= w - r - 3 and r + 2 <= cell.cy <= h - r - 3):
        return False
    if not others:
        return True
    cx = np.fromiter((o.cx for o in others), dtype=np.float64, count=len(others))
    cy = np.fromiter((o.cy for o in others), dtype=np.float64, count=len(others))
    rad = np.fromiter(
        (max(o.ax, o.ay) for o in others), dtype=np.float64, count=len(others)
    )
    dist = np.hypot(cell.cx - cx, cell.cy - cy)
    return bool((dist >= margin * (r + rad) + 4.0).all())


def _rasterize(cells: list[_Cell], h: int, w: int) -> LabelImage:
    labels = np.zeros((h, w), dtype=np.int64)
    ys, xs = np.mgrid[0:h, 0:w]
    for c in cells:
        inside = ((xs - c.cx) / c.ax) ** 2 + ((ys - c.cy) / c.ay) ** 2 <= 1.0
        labels[inside] = c.track_id
    return LabelImage(labels)


def _render_image(labels: LabelImage, rng: np.random.Generator) -> np.ndarray:
    img = np.where(labels.labels > 0, 0.8, 0.1)
    img = ndimage.gaussian_filter(img, sigma=1.5)
    img += rng.normal(0.0, 0.02, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def generate_sequence(cfg: SynthConfig) -> SynthSequence:
    """Random-walking, optionally dividing elliptical cells; seeded."""
    rng = np.random.default_rng(cfg.seed)
    cells: list[_Cell] = []
    next_id = 0

    def spawn(ax: float, ay: float, near: tuple[float, float] | None = None) -> _Cell | None:
        nonlocal next_id
        for _ in range(200):
            if near is None:
                cx = rng.uniform(0, cfg.w)
                cy = rng.uniform(0, cfg.h)
            else:
                ang = rng.uniform(0, 2 * math.pi)
                dist = rng.uniform(2, 4) + cfg.margin * max(ax, ay) * 2
                cx = near[0] + dist * math.cos(ang)
                cy = near[1] + dist * math.sin(ang)
            cand = _Cell(0, cx, cy, ax, ay)
            if _fits(cand, cells, cfg.h, cfg.w, cfg.margin):
                next_id += 1
                cand.track_id = next_id
                return cand
        return None

    for _ in range(cfg.n_cells):
        ax = rng.uniform(cfg.radius_min, cfg.radius_max)
        ay = rng.uniform(cfg.radius_min, cfg.radius_max)
        cell = spawn(ax, ay)
        if cell is None:
            raise RuntimeError("could not pack the requested number of cells")
        cells.append(cell)

    track_state: dict[int, dict] = {
        c.track_id: {"start": 0, "end": 0, "parent": 0} for c in cells
    }
    labels = [_rasterize(cells, cfg.h, cfg.w)]
    images = [_render_image(labels[0], rng)]
    frame_labels = [{c.track_id: c.track_id for c in cells}]

    for t in range(1, cfg.frames):
        survivors: list[_Cell] = []
        for cell in list(cells):
            if rng.uniform() < cfg.division_prob:
                cells.remove(cell)
                ax = max(cfg.radius_min, cell.ax * 0.75)
                ay = max(cfg.radius_min, cell.ay * 0.75)
                kids = []
                for _ in range(2):
                    kid = spawn(ax, ay, near=(cell.cx, cell.cy))
                    if kid is not None:
                        cells.append(kid)
                        kids.append(kid)
                if len(kids) == 2:
                    for kid in kids:
                        track_state[kid.track_id] = {
                            "start": t,
                            "end": t,
                            "parent": cell.track_id,
                        }
                    survivors.extend(kids)
                    continue
                # could not place both children: revert to plain movement
                for kid in kids:
                    cells.remove(kid)
                    track_state.pop(kid.track_id, None)
                cells.append(cell)
            cells.remove(cell)
            for _ in range(20):
                moved = _Cell(
                    cell.track_id,
                    cell.cx + rng.normal(0, cfg.step_sigma),
                    cell.cy + rng.normal(0, cfg.step_sigma),
                    cell.ax,
                    cell.ay,
                )
                if _fits(moved, cells, cfg.h, cfg.w, cfg.margin):
                    cell = moved
                    break
            cells.append(cell)
            track_state[cell.track_id]["end"] = t
            survivors.append(cell)
        labels.append(_rasterize(cells, cfg.h, cfg.w))
        images.append(_render_image(labels[-1], rng))
        frame_labels.append({c.track_id: c.track_id for c in cells})

    tracks = sorted(
        (
            Track(tid, st["start"], st["end"], st["parent"])
            for tid, st in track_state.items()
        ),
        key=lambda tr: tr.track_id,
    )
    graph = TrackGraph(tracks=tracks, frame_labels=frame_labels)
    graph.validate()
    return SynthSequence(images=images, labels=labels, graph=graph)


def bandwidth_for_extent(
    half_w: float,
    half_h: float,
    h: int,
    w: int,
    w_s: float = BANDWIDTH_SCALE_WEIGHT,
    alpha: float = 0.4,
    beta: float = 1.2,
) -> np.ndarray:
    """Raw bandwidth 2-vector for a cell of the given half-extents.

    The kernel's 0.5 contour is placed at ``alpha * extent + beta``
    pixels: wide enough that every shifted pixel of the cell (which
    lands on the medoid, up to vote rounding) scores above 0.5 for its
    own candidate, yet narrow enough that kernel mass outside the mask
    is negligible in the losses.  Values outside the representable
    range of exp(w_s * [0, 1]) are clipped.
    """
    rho_x = alpha * half_w + beta
    rho_y = alpha * half_h + beta
    sx = (rho_x / w) ** 2 / math.log(2.0)
    sy = (rho_y / h) ** 2 / math.log(2.0)
    return np.clip(np.log([sx, sy]) / w_s, 0.0, 1.0)


def extent_bandwidth_recipe(alpha: float = 0.25, beta: float = 0.3):
    """A ``bw_recipe`` callable with a custom 0.5-contour placement.

    The defaults are deliberately tight: they keep nearly all kernel
    mass inside each mask so the losses evaluate to ~0 on ideal
    predictions.  The wider built-in recipe (alpha 0.4, beta 1.2) is
    preferred when predictions are noisy.
    """

    def recipe(m: int, labels: LabelImage) -> np.ndarray:
        rows, cols = labels.pixels(m)
        half_w = (cols.max() - cols.min()) / 2.0 + 0.5
        half_h = (rows.max() - rows.min()) / 2.0 + 0.5
        return bandwidth_for_extent(
            half_w, half_h, labels.height, labels.width, alpha=alpha, beta=beta
        )

    return recipe


def _instance_geometry(labels: LabelImage) -> dict[int, dict]:
    h, w = labels.height, labels.width
    out: dict[int, dict] = {}
    for m in map(int, labels.instance_ids()):
        rows, cols = labels.pixels(m)
        mr, mc = medoid_of_arrays(rows, cols)
        half_w = (cols.max() - cols.min()) / 2.0 + 0.5
        half_h = (rows.max() - rows.min()) / 2.0 + 0.5
        out[m] = {
            "rows": rows,
            "cols": cols,
            "medoid": (mr, mc),
            "raw_bw": bandwidth_for_extent(half_w, half_h, h, w),
        }
    return out


def _ideal_seg(labels: LabelImage, bw_recipe=None) -> SegPrediction:
    h, w = labels.height, labels.width
    off = np.zeros((2, h, w))
    bw = np.zeros((2, h, w))
    seed = np.zeros((h, w))
    geo = _instance_geometry(labels)
    for m, info in geo.items():
        if bw_recipe is not None:
            info["raw_bw"] = np.asarray(bw_recipe(m, labels), dtype=np.float64)
    raw_values = [info["raw_bw"] for info in geo.values()]
    fill = np.mean(raw_values, axis=0) if raw_values else np.array([0.5, 0.5])
    bw[0], bw[1] = fill[0], fill[1]
    for m, info in geo.items():
        rows, cols = info["rows"], info["cols"]
        mr, mc = info["medoid"]
        off[0, rows, cols] = (mc - cols) / w
        off[1, rows, cols] = (mr - rows) / h
        bw[0, rows, cols] = info["raw_bw"][0]
        bw[1, rows, cols] = info["raw_bw"][1]
        # seediness = the seed-loss regression target: the kernel score
        # of each pixel's shifted position, which the ideal offsets put
        # on the medoid itself
        s = np.exp(BANDWIDTH_SCALE_WEIGHT * info["raw_bw"])
        ex = cols / w + off[0, rows, cols]
        ey = rows / h + off[1, rows, cols]
        dx = mc / w - ex
        dy = mr / h - ey
        seed[rows, cols] = np.exp(-dx * dx / s[0] - dy * dy / s[1])
    return SegPrediction(
        offsets=VectorField(off),
        bandwidths=BandwidthField(bw),
        seediness=ScalarField(seed),
    )


def ideal_predictions(
    labels_t: LabelImage,
    labels_tm1: LabelImage,
    links: dict[int, int],
    bw_recipe=None,
) -> PredictionSet:
    """Prediction tensors a perfect network would emit for one frame pair.

    ``links`` maps frame-t labels to their predecessor label at t-1;
    unlinked cells get zero tracking offsets and are expected to open new
    tracks.  ``bw_recipe(label, label_image)`` optionally overrides the
    extent-derived raw bandwidth per instance.
    """
    h, w = labels_t.height, labels_t.width
    track = np.zeros((2, h, w))
    prev_geo = _instance_geometry(labels_tm1)
    for m in map(int, labels_t.instance_ids()):
        prev = links.get(m)
        if prev is None or prev not in prev_geo:
            continue
        rows, cols = labels_t.pixels(m)
        mr, mc = prev_geo[prev]["medoid"]
        track[0, rows, cols] = (mc - cols) / w
        track[1, rows, cols] = (mr - rows) / h
    return PredictionSet(
        seg_t=_ideal_seg(labels_t, bw_recipe),
        seg_tm1=_ideal_seg(labels_tm1, bw_recipe),
        track=VectorField(track),
    )
