"""File formats: 16-bit mask images, track text files, tensor containers.

Masks are single-channel 16-bit TIFFs named ``mask{frame:03d}.tif`` (the
frame index widens automatically past 999).  Track files hold one line
per track: ``id start end parent``, space-separated, parent 0 meaning
none.  Prediction tensors for a frame pair travel in a NumPy ``.npz``
container (documented keys below), one file per pair, optionally one per
test-time augmentation op: ``pair{t:04d}.npz`` or
``pair{t:04d}__{op}.npz``.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .fields import (
    BandwidthField,
    LabelImage,
    PredictionSet,
    ScalarField,
    SegPrediction,
    VectorField,
)
from .linking import Track, TrackGraph

MAX_LABEL = 65535

#: npz keys of the prediction container
PRED_KEYS = (
    "seg_off_t",
    "bw_t",
    "seed_t",
    "seg_off_tm1",
    "bw_tm1",
    "seed_tm1",
    "track_off",
)


class InputError(Exception):
    """Malformed or missing input files."""


def frame_name(prefix: str, frame: int, suffix: str) -> str:
    return f"{prefix}{frame:03d}{suffix}"


def write_mask(path: Path, labels: LabelImage) -> None:
    arr = labels.labels
    if arr.max(initial=0) > MAX_LABEL:
        raise InputError(f"{path}: labels exceed the 16-bit ceiling ({MAX_LABEL})")
    Image.fromarray(arr.astype(np.uint16)).save(path)


def read_mask(path: Path) -> LabelImage:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img)
    except OSError as exc:
        raise InputError(f"cannot read mask {path}: {exc}") from exc
    if arr.ndim != 2:
        raise InputError(f"{path}: expected a single-channel mask")
    return LabelImage(arr.astype(np.int64))


def write_track_file(path: Path, graph: TrackGraph) -> None:
    lines = [
        f"{t.track_id} {t.start_frame} {t.end_frame} {t.parent_id}"
        for t in sorted(graph.tracks, key=lambda t: t.track_id)
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_track_file(path: Path, frame_labels: list[dict[int, int]] | None = None) -> TrackGraph:
    tracks = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read track file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise InputError(f"{path}:{lineno}: expected 'id start end parent'")
        tid, start, end, parent = map(int, parts)
        tracks.append(Track(tid, start, end, parent))
    if frame_labels is None:
        n_frames = max((t.end_frame for t in tracks), default=-1) + 1
        frame_labels = [
            {
                t.track_id: t.track_id
                for t in tracks
                if t.start_frame <= f <= t.end_frame
            }
            for f in range(n_frames)
        ]
    graph = TrackGraph(tracks=tracks, frame_labels=frame_labels)
    graph.validate()
    return graph


def write_predictions(path: Path, pred: PredictionSet) -> None:
    np.savez_compressed(
        path,
        seg_off_t=pred.seg_t.offsets.values,
        bw_t=pred.seg_t.bandwidths.values,
        seed_t=pred.seg_t.seediness.values,
        seg_off_tm1=pred.seg_tm1.offsets.values,
        bw_tm1=pred.seg_tm1.bandwidths.values,
        seed_tm1=pred.seg_tm1.seediness.values,
        track_off=pred.track.values,
    )


def read_predictions(path: Path) -> PredictionSet:
    try:
        with np.load(path) as data:
            missing = [k for k in PRED_KEYS if k not in data]
            if missing:
                raise InputError(f"{path}: missing tensors {missing}")
            arrays = {k: np.asarray(data[k], dtype=np.float64) for k in PRED_KEYS}
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read predictions {path}: {exc}") from exc
    try:
        return PredictionSet(
            seg_t=SegPrediction(
                offsets=VectorField(arrays["seg_off_t"]),
                bandwidths=BandwidthField(arrays["bw_t"]),
                seediness=ScalarField(arrays["seed_t"]),
            ),
            seg_tm1=SegPrediction(
                offsets=VectorField(arrays["seg_off_tm1"]),
                bandwidths=BandwidthField(arrays["bw_tm1"]),
                seediness=ScalarField(arrays["seed_tm1"]),
            ),
            track=VectorField(arrays["track_off"]),
        )
    except ValueError as exc:
        raise InputError(f"malformed tensors in {path}: {exc}") from exc


_PAIR_RE = re.compile(r"^pair(\d+)(?:__([a-z0-9]+))?\.npz$")


def scan_prediction_dir(directory: Path) -> dict[int, dict[str, Path]]:
    """Map frame index t -> {op name: file} for all pair containers."""
    out: dict[int, dict[str, Path]] = {}
    for path in sorted(Path(directory).iterdir()):
        match = _PAIR_RE.match(path.name)
        if not match:
            continue
        t = int(match.group(1))
        op = match.group(2) or "identity"
        out.setdefault(t, {})[op] = path
    return out


def write_mask_sequence(directory: Path, labels: list[LabelImage]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t, lab in enumerate(labels):
        write_mask(directory / frame_name("mask", t, ".tif"), lab)


def read_mask_sequence(directory: Path) -> list[LabelImage]:
    directory = Path(directory)
    paths = sorted(directory.glob("mask*.tif"))
    if not paths:
        raise InputError(f"no mask images in {directory}")
    return [read_mask(p) for p in paths]
