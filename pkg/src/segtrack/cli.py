"""Command line interface.

Exit codes: 0 ok, 1 input error (missing/malformed files, bad config),
2 internal error.  Flags override values from an optional ``key=value``
config file (``--config``); recognized keys are the PipelineConfig
fields (crop_size, overlap, percentile_low, percentile_high, tta as a
comma list) and the clustering fields prefixed ``cluster.`` (e.g.
``cluster.min_mask_size``).  ``SEGTRACK_WORKERS`` sets the worker count.
"""

from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

import click

from .clustering import ClusterConfig, cluster_frame
from .ctcio import (
    InputError,
    read_mask_sequence,
    read_predictions,
    read_track_file,
    write_mask,
)
from .linking import build_track_graph, resolve_links, vote_predecessors
from .metrics import evaluate
from .pipeline import PipelineConfig, persist_sequence, run_pipeline
from .synth import SynthConfig, generate_sequence


def _parse_config_file(path: Path) -> dict:
    values: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _build_config(config_path: Path | None, **overrides) -> PipelineConfig:
    raw = _parse_config_file(config_path) if config_path else {}
    pipe_kwargs: dict = {}
    cluster_kwargs: dict = {}
    cluster_fields = {f.name: f.type for f in dataclasses.fields(ClusterConfig)}
    pipe_fields = {f.name for f in dataclasses.fields(PipelineConfig)}
    for key, value in raw.items():
        if key.startswith("cluster."):
            name = key[len("cluster."):]
            if name not in cluster_fields:
                raise InputError(f"unknown config key {key!r}")
            cluster_kwargs[name] = float(value) if "." in value or "e" in value else int(value)
        elif key == "tta":
            pipe_kwargs["tta"] = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key in pipe_fields:
            caster = float if key.startswith("percentile") else int
            pipe_kwargs[key] = caster(value)
        else:
            raise InputError(f"unknown config key {key!r}")
    for key, value in overrides.items():
        if value is not None:
            pipe_kwargs[key] = value
    if "min_mask_size" in cluster_kwargs:
        cluster_kwargs["min_mask_size"] = int(cluster_kwargs["min_mask_size"])
    try:
        return PipelineConfig(cluster=ClusterConfig(**cluster_kwargs), **pipe_kwargs)
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad configuration: {exc}") from exc


@click.group()
def main() -> None:
    """Instance segmentation and tracking from offset/bandwidth embeddings."""


@main.command()
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--height", default=256, show_default=True)
@click.option("--width", default=256, show_default=True)
@click.option("--cells", default=10, show_default=True)
@click.option("--frames", default=10, show_default=True)
@click.option("--division-prob", default=0.0, show_default=True)
@click.option("--step-sigma", default=2.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
def synth(out, height, width, cells, frames, division_prob, step_sigma, seed):
    """Generate a synthetic dataset with ideal prediction tensors."""
    cfg = SynthConfig(
        h=height, w=width, n_cells=cells, frames=frames,
        division_prob=division_prob, step_sigma=step_sigma, seed=seed,
    )
    seq = generate_sequence(cfg)
    persist_sequence(seq, out)
    click.echo(f"wrote {frames} frames, {len(seq.graph.tracks)} tracks to {out}")


@main.command()
@click.option("--predictions", type=click.Path(path_type=Path), required=True,
              help="npz container for one frame pair")
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="output mask image")
@click.option("--frame", type=click.Choice(["t", "tm1"]), default="t", show_default=True)
@click.option("--config", type=click.Path(path_type=Path), default=None)
def cluster(predictions, out, frame, config):
    """Cluster a single frame's predictions into an instance mask."""
    cfg = _build_config(config)
    pred = read_predictions(predictions)
    seg = pred.seg_t if frame == "t" else pred.seg_tm1
    outcome = cluster_frame(seg.offsets, seg.bandwidths, seg.seediness, cfg.cluster)
    write_mask(out, outcome.labels)
    n = outcome.labels.instance_ids().size
    click.echo(f"{n} instances ({outcome.rejected} candidates rejected)")


@main.command()
@click.option("--masks", type=click.Path(path_type=Path), required=True,
              help="directory of per-frame instance masks")
@click.option("--predictions", type=click.Path(path_type=Path), required=True,
              help="directory of pairNNNN.npz containers")
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="output track file")
def track(masks, predictions, out):
    """Link an already-segmented sequence backward in time."""
    from .ctcio import scan_prediction_dir

    labels = read_mask_sequence(masks)
    pairs = scan_prediction_dir(predictions)
    decisions = []
    for t in range(1, len(labels)):
        if t not in pairs:
            raise InputError(f"missing prediction container for pair {t}")
        pred = read_predictions(sorted(pairs[t].items())[0][1])
        table = vote_predecessors(labels[t], pred.track, labels[t - 1])
        decisions.append(resolve_links(table))
    graph = build_track_graph(decisions, labels)
    from .ctcio import write_track_file

    write_track_file(out, graph)
    click.echo(f"{len(graph.tracks)} tracks -> {out}")


@main.command(name="pipeline")
@click.option("--predictions", type=click.Path(path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--gt", type=click.Path(path_type=Path), default=None)
@click.option("--images", type=click.Path(path_type=Path), default=None)
@click.option("--config", type=click.Path(path_type=Path), default=None)
@click.option("--overlays", is_flag=True, help="emit color-mapped label overlays")
def pipeline_cmd(predictions, out, gt, images, config, overlays):
    """Full run: merge, cluster, link, persist, evaluate (with --gt)."""
    cfg = _build_config(
        config,
        pred_dir=predictions,
        output_dir=out,
        gt_dir=gt,
        images_dir=images,
        emit_overlays=True if overlays else None,
    )
    report = run_pipeline(cfg)
    if report is None:
        click.echo("results written; metrics skipped (no ground truth)")
    else:
        click.echo(
            f"SEG={report.seg:.6f} DET={report.det:.6f} "
            f"TRA={report.tra:.6f} OP_CTB={report.op_ctb:.6f}"
        )


@main.command(name="evaluate")
@click.option("--gt", type=click.Path(path_type=Path), required=True)
@click.option("--result", type=click.Path(path_type=Path), required=True)
def evaluate_cmd(gt, result):
    """Score an existing result directory against ground truth."""
    gt_labels = read_mask_sequence(Path(gt))
    gt_graph = read_track_file(Path(gt) / "tracks.txt")
    res_labels = read_mask_sequence(Path(result))
    res_graph = read_track_file(Path(result) / "res_track.txt")
    report = evaluate(gt_graph, gt_labels, res_graph, res_labels)
    for key, value in report.as_dict().items():
        if key != "counts":
            click.echo(f"{key}={value:.9f}")
    for key, value in sorted(report.counts.items()):
        click.echo(f"count_{key}={value}")


def run() -> int:
    try:
        main.main(standalone_mode=False)
    except (InputError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        click.echo(f"internal error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(run())
