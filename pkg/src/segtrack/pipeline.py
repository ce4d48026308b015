"""Batch driver: normalization, tiling, augmentation merging, stitching,
clustering + linking over a sequence, persistence, evaluation.

Prediction tensors are consumed from ``.npz`` containers (one per frame
pair, optionally one per symmetry op; see :mod:`segtrack.ctcio`).  Frame
t's labels come from the pair (t, t-1); frame 0 is clustered from pair
(1, 0)'s t-1 slot, so every frame is clustered exactly once.
"""

from __future__ import annotations

import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ctcio
from .clustering import ClusterConfig, cluster_frame
from .ctcio import InputError
from .fields import (
    BandwidthField,
    LabelImage,
    PredictionSet,
    ScalarField,
    SegPrediction,
    VectorField,
)
from .linking import TrackGraph, build_track_graph, resolve_links, vote_predecessors
from .metrics import AogmWeights, EvalReport, evaluate
from .synth import SynthSequence, ideal_predictions

TTA_OPS = ("identity", "hflip", "vflip", "rot90", "rot180", "rot270")

_INVERSE = {
    "identity": "identity",
    "hflip": "hflip",
    "vflip": "vflip",
    "rot90": "rot270",
    "rot180": "rot180",
    "rot270": "rot90",
}


@dataclass(frozen=True)
class PipelineConfig:
    pred_dir: Path | None = None
    output_dir: Path | None = None
    gt_dir: Path | None = None
    images_dir: Path | None = None
    crop_size: int = 256
    overlap: int = 64  # crop_size / 4 unless configured
    percentile_low: float = 1.0
    percentile_high: float = 99.0
    tta: tuple[str, ...] = TTA_OPS
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    workers: int = 1
    emit_overlays: bool = False

    def __post_init__(self):
        if self.overlap >= self.crop_size:
            raise ValueError("overlap must be smaller than crop_size")
        if not (0 <= self.percentile_low < self.percentile_high <= 100):
            raise ValueError("percentiles must satisfy 0 <= low < high <= 100")
        for op in self.tta:
            if op not in TTA_OPS:
                raise ValueError(f"unknown symmetry op {op!r}")


def percentile_normalize(image: np.ndarray, low: float = 1.0, high: float = 99.0) -> np.ndarray:
    """Min-max normalize to [0, 1] between two intensity percentiles."""
    image = np.asarray(image, dtype=np.float64)
    p_low, p_high = np.percentile(image, [low, high])
    if p_high == p_low:
        warnings.warn("degenerate image: identical normalization percentiles")
        return np.zeros_like(image)
    return np.clip((image - p_low) / (p_high - p_low), 0.0, 1.0)


# ---------------------------------------------------------------- tiling


@dataclass(frozen=True)
class CropPlan:
    """Overlapping tiles covering a (possibly reflect-padded) image."""

    image_h: int
    image_w: int
    padded_h: int
    padded_w: int
    tiles: tuple[tuple[int, int, int, int], ...]  # (row0, col0, h, w)
    coverage: np.ndarray  # padded_h x padded_w visit counts


def _tile_starts(dim: int, crop: int, step: int) -> list[int]:
    if dim <= crop:
        return [0]
    starts = list(range(0, dim - crop + 1, step))
    if starts[-1] != dim - crop:
        starts.append(dim - crop)  # snap the last tile to the border
    return starts


def plan_crops(h: int, w: int, crop: int, overlap: int) -> CropPlan:
    if overlap >= crop:
        raise ValueError("overlap must be smaller than crop size")
    step = crop - overlap
    padded_h, padded_w = max(h, crop), max(w, crop)
    tiles = tuple(
        (r0, c0, crop, crop)
        for r0 in _tile_starts(padded_h, crop, step)
        for c0 in _tile_starts(padded_w, crop, step)
    )
    coverage = np.zeros((padded_h, padded_w), dtype=np.int64)
    for r0, c0, th, tw in tiles:
        coverage[r0 : r0 + th, c0 : c0 + tw] += 1
    if coverage.min() < 1:
        raise AssertionError("crop plan left uncovered pixels")
    return CropPlan(h, w, padded_h, padded_w, tiles, coverage)


def pad_reflect(image: np.ndarray, plan: CropPlan) -> np.ndarray:
    pad_h = plan.padded_h - plan.image_h
    pad_w = plan.padded_w - plan.image_w
    if pad_h == 0 and pad_w == 0:
        return image
    return np.pad(image, ((0, pad_h), (0, pad_w)), mode="reflect")


# ------------------------------------------------- symmetry ops / TTA


def transform_scalar(a: np.ndarray, op: str) -> np.ndarray:
    if op == "identity":
        return a.copy()
    if op == "hflip":
        return np.flip(a, axis=-1).copy()
    if op == "vflip":
        return np.flip(a, axis=-2).copy()
    if op.startswith("rot"):
        k = int(op[3:]) // 90
        return np.rot90(a, k, axes=(-2, -1)).copy()
    raise ValueError(f"unknown symmetry op {op!r}")


def transform_vector(v: np.ndarray, op: str) -> np.ndarray:
    """Transform a 2 x H x W displacement field (index remap + mixing)."""
    x = transform_scalar(v[0], op)
    y = transform_scalar(v[1], op)
    if op in ("identity",):
        return np.stack([x, y])
    if op == "hflip":
        return np.stack([-x, y])
    if op == "vflip":
        return np.stack([x, -y])
    if op == "rot90":  # displacement (dx, dy) -> (dy, -dx)
        return np.stack([y, -x])
    if op == "rot180":
        return np.stack([-x, -y])
    if op == "rot270":
        return np.stack([-y, x])
    raise ValueError(f"unknown symmetry op {op!r}")


def transform_bandwidth(b: np.ndarray, op: str) -> np.ndarray:
    """Per-axis bandwidths swap components under 90/270 degree rotations."""
    x = transform_scalar(b[0], op)
    y = transform_scalar(b[1], op)
    if op in ("rot90", "rot270"):
        return np.stack([y, x])
    return np.stack([x, y])


def transform_predictions(pred: PredictionSet, op: str) -> PredictionSet:
    def seg(s: SegPrediction) -> SegPrediction:
        return SegPrediction(
            offsets=VectorField(transform_vector(s.offsets.values, op)),
            bandwidths=BandwidthField(transform_bandwidth(s.bandwidths.values, op)),
            seediness=ScalarField(transform_scalar(s.seediness.values, op)),
        )

    return PredictionSet(
        seg_t=seg(pred.seg_t),
        seg_tm1=seg(pred.seg_tm1),
        track=VectorField(transform_vector(pred.track.values, op)),
    )


def _mean_predictions(items: list[PredictionSet]) -> PredictionSet:
    def mean(getter) -> np.ndarray:
        return np.mean([getter(p) for p in items], axis=0)

    return PredictionSet(
        seg_t=SegPrediction(
            offsets=VectorField(mean(lambda p: p.seg_t.offsets.values)),
            bandwidths=BandwidthField(mean(lambda p: p.seg_t.bandwidths.values)),
            seediness=ScalarField(mean(lambda p: p.seg_t.seediness.values)),
        ),
        seg_tm1=SegPrediction(
            offsets=VectorField(mean(lambda p: p.seg_tm1.offsets.values)),
            bandwidths=BandwidthField(mean(lambda p: p.seg_tm1.bandwidths.values)),
            seediness=ScalarField(mean(lambda p: p.seg_tm1.seediness.values)),
        ),
        track=VectorField(mean(lambda p: p.track.values)),
    )


def tta_merge(tagged: list[tuple[str, PredictionSet]]) -> PredictionSet:
    """Average augmented outputs after mapping them back to the canonical
    frame (inverse index remap plus component mixing)."""
    if not tagged:
        raise ValueError("no predictions to merge")
    canonical = [transform_predictions(pred, _INVERSE[op]) for op, pred in tagged]
    shapes = {(p.height, p.width) for p in canonical}
    if len(shapes) != 1:
        raise ValueError(f"inconsistent canonical shapes: {shapes}")
    return _mean_predictions(canonical)


# ------------------------------------------------------------- stitching


def stitch(
    crops: list[tuple[tuple[int, int, int, int], PredictionSet]],
    plan: CropPlan,
) -> PredictionSet:
    """Per-pixel mean over covering tiles, on the full-image grid.

    Crop-local offsets are re-expressed in image-normalized units (scaled
    by crop/image extent) before averaging.
    """
    ph, pw = plan.padded_h, plan.padded_w
    acc = {k: np.zeros(s) for k, s in {
        "seg_off_t": (2, ph, pw), "bw_t": (2, ph, pw), "seed_t": (ph, pw),
        "seg_off_tm1": (2, ph, pw), "bw_tm1": (2, ph, pw), "seed_tm1": (ph, pw),
        "track_off": (2, ph, pw),
    }.items()}
    count = np.zeros((ph, pw), dtype=np.int64)
    seen = set()
    for tile, pred in crops:
        r0, c0, th, tw = tile
        if (pred.height, pred.width) != (th, tw):
            raise ValueError("crop prediction does not match its tile")
        seen.add(tile)
        scale = np.array([tw / pw, th / ph]).reshape(2, 1, 1)
        sl = (slice(r0, r0 + th), slice(c0, c0 + tw))
        for key, getter in (
            ("seg_off_t", lambda p: p.seg_t.offsets.values * scale),
            ("bw_t", lambda p: p.seg_t.bandwidths.values),
            ("seed_t", lambda p: p.seg_t.seediness.values),
            ("seg_off_tm1", lambda p: p.seg_tm1.offsets.values * scale),
            ("bw_tm1", lambda p: p.seg_tm1.bandwidths.values),
            ("seed_tm1", lambda p: p.seg_tm1.seediness.values),
            ("track_off", lambda p: p.track.values * scale),
        ):
            acc[key][..., sl[0], sl[1]] += getter(pred)
        count[sl] += 1
    if set(plan.tiles) - seen:
        raise RuntimeError("stitch received an incomplete tile set")
    if (count < 1).any():
        raise RuntimeError("coverage gap while stitching")
    h, w = plan.image_h, plan.image_w
    out = {k: (v / count)[..., :h, :w] for k, v in acc.items()}
    return PredictionSet(
        seg_t=SegPrediction(
            offsets=VectorField(out["seg_off_t"]),
            bandwidths=BandwidthField(out["bw_t"]),
            seediness=ScalarField(out["seed_t"]),
        ),
        seg_tm1=SegPrediction(
            offsets=VectorField(out["seg_off_tm1"]),
            bandwidths=BandwidthField(out["bw_tm1"]),
            seediness=ScalarField(out["seed_tm1"]),
        ),
        track=VectorField(out["track_off"]),
    )


# ------------------------------------------------------------- sequences


def persist_sequence(seq: SynthSequence, root: Path) -> None:
    """Write a synthetic sequence in the on-disk dataset layout.

    ``root/images`` raw frames, ``root/gt`` mask images (labels = track
    ids) + ``tracks.txt``, ``root/pred`` ideal prediction containers.
    """
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "gt").mkdir(parents=True, exist_ok=True)
    (root / "pred").mkdir(parents=True, exist_ok=True)
    for t, img in enumerate(seq.images):
        arr = (np.clip(img, 0, 1) * 65535).astype(np.uint16)
        ctcio.write_mask(
            root / "images" / ctcio.frame_name("img", t, ".tif"), LabelImage(arr.astype(np.int64))
        )
    ctcio.write_mask_sequence(root / "gt", seq.labels)
    ctcio.write_track_file(root / "gt" / "tracks.txt", seq.graph)
    for t in range(1, len(seq.labels)):
        pred = ideal_predictions(
            seq.labels[t], seq.labels[t - 1], seq.links_for_pair(t)
        )
        ctcio.write_predictions(root / "pred" / f"pair{t:04d}.npz", pred)


def _relabel_to_tracks(
    labels: list[LabelImage], graph: TrackGraph
) -> list[LabelImage]:
    out = []
    for f, lab in enumerate(labels):
        mapping = {label: tid for tid, label in graph.frame_labels[f].items()}
        relabeled = np.zeros_like(lab.labels)
        for label, tid in mapping.items():
            relabeled[lab.labels == label] = tid
        out.append(LabelImage(relabeled))
    return out


def _overlay(labels: LabelImage) -> np.ndarray:
    rng = np.random.default_rng(7)
    palette = rng.integers(40, 255, size=(int(labels.labels.max(initial=0)) + 1, 3))
    palette[0] = 0
    return palette[labels.labels].astype(np.uint8)


def run_pipeline(cfg: PipelineConfig) -> EvalReport | None:
    """Full batch run; returns the evaluation report when GT is present."""
    if cfg.pred_dir is None or cfg.output_dir is None:
        raise InputError("pred_dir and output_dir are required")
    pred_dir = Path(cfg.pred_dir)
    if not pred_dir.is_dir():
        raise InputError(f"no input: prediction directory {pred_dir} not found")
    pairs = ctcio.scan_prediction_dir(pred_dir)
    if not pairs:
        raise InputError(f"no input: no prediction containers in {pred_dir}")
    ts = sorted(pairs)
    n_frames = ts[-1] + 1
    if ts != list(range(1, n_frames)):
        raise InputError(f"prediction pairs are not contiguous from 1: {ts}")

    def merged(t: int) -> PredictionSet:
        tagged = [(op, ctcio.read_predictions(p)) for op, p in sorted(pairs[t].items())]
        return tta_merge(tagged)

    workers = cfg.workers
    env_workers = os.environ.get("SEGTRACK_WORKERS")
    if env_workers:
        workers = max(1, int(env_workers))

    merged_preds: dict[int, PredictionSet] = {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for t, pred in zip(ts, pool.map(merged, ts)):
                merged_preds[t] = pred
    else:
        for t in ts:
            merged_preds[t] = merged(t)

    def cluster(seg: SegPrediction) -> LabelImage:
        return cluster_frame(seg.offsets, seg.bandwidths, seg.seediness, cfg.cluster).labels

    labels: list[LabelImage | None] = [None] * n_frames
    jobs = [(0, merged_preds[1].seg_tm1)] + [(t, merged_preds[t].seg_t) for t in ts]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for (f, _), lab in zip(jobs, pool.map(lambda j: cluster(j[1]), jobs)):
                labels[f] = lab
    else:
        for f, seg in jobs:
            labels[f] = cluster(seg)
    label_seq: list[LabelImage] = labels  # type: ignore[assignment]

    decisions = []
    for t in ts:
        table = vote_predecessors(label_seq[t], merged_preds[t].track, label_seq[t - 1])
        decisions.append(resolve_links(table))
    graph = build_track_graph(decisions, label_seq)

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result_labels = _relabel_to_tracks(label_seq, graph)
    # result masks carry track ids, so the graph's per-frame label map
    # becomes the identity on the ids alive in each frame
    graph = TrackGraph(
        tracks=graph.tracks,
        frame_labels=[{tid: tid for tid in fl} for fl in graph.frame_labels],
    )
    ctcio.write_mask_sequence(out_dir, result_labels)
    ctcio.write_track_file(out_dir / "res_track.txt", graph)
    if cfg.emit_overlays:
        from PIL import Image

        for t, lab in enumerate(result_labels):
            Image.fromarray(_overlay(lab)).save(
                out_dir / ctcio.frame_name("overlay", t, ".png")
            )

    report = None
    if cfg.gt_dir is not None:
        gt_dir = Path(cfg.gt_dir)
        gt_labels = ctcio.read_mask_sequence(gt_dir)
        if len(gt_labels) != n_frames:
            raise InputError(
                f"GT has {len(gt_labels)} frames, predictions cover {n_frames}"
            )
        gt_graph = ctcio.read_track_file(gt_dir / "tracks.txt")
        report = evaluate(gt_graph, gt_labels, graph, result_labels, AogmWeights())
        (out_dir / "report.json").write_text(json.dumps(report.as_dict(), indent=2))
        lines = [f"SEG={report.seg:.9f}", f"DET={report.det:.9f}",
                 f"TRA={report.tra:.9f}", f"OP_CTB={report.op_ctb:.9f}"]
        lines += [f"count_{k}={v}" for k, v in sorted(report.counts.items())]
        (out_dir / "report.txt").write_text("\n".join(lines) + "\n")
    return report
