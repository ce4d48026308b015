"""Evaluation: SEG, graph-matching DET/TRA, their mean, and motility.

Ground-truth masks match a predicted mask when the intersection covers
at least half of the ground-truth mask.  DET counts vertex edits (false
negatives, false positives, merges), TRA adds edge edits (missing,
redundant, wrong-semantics links); both are normalized against the cost
of building the ground-truth graph from scratch.  The default edit
weights follow the published benchmark convention and are configurable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import LabelImage
from .linking import TrackGraph

Node = tuple[int, int]  # (frame, label)
Edge = tuple[Node, Node]


@dataclass(frozen=True)
class AogmWeights:
    # external-convention defaults, not fixed by the method itself
    w_ns: float = 5.0
    w_fn: float = 10.0
    w_fp: float = 1.0
    w_ed: float = 1.0
    w_ea: float = 1.5
    w_ec: float = 1.0


@dataclass
class EvalReport:
    seg: float
    det: float
    tra: float
    op_ctb: float
    counts: dict[str, int] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "SEG": self.seg,
            "DET": self.det,
            "TRA": self.tra,
            "OP_CTB": self.op_ctb,
            "counts": dict(self.counts),
        }


def _overlap_counts(gt: LabelImage, pred: LabelImage) -> dict[int, dict[int, int]]:
    """Intersection pixel counts gt label -> pred label -> count."""
    g = gt.labels.ravel()
    p = pred.labels.ravel()
    keep = g > 0
    pairs, counts = np.unique(
        np.stack([g[keep], p[keep]]), axis=1, return_counts=True
    )
    out: dict[int, dict[int, int]] = {}
    for (gl, pl), c in zip(pairs.T, counts):
        out.setdefault(int(gl), {})[int(pl)] = int(c)
    return out


def _match_frame(gt: LabelImage, pred: LabelImage) -> dict[int, int | None]:
    """Per GT mask: the predicted label covering at least half of it."""
    overlaps = _overlap_counts(gt, pred)
    gt_sizes = {int(l): int((gt.labels == l).sum()) for l in gt.instance_ids()}
    matches: dict[int, int | None] = {}
    for gl, size in gt_sizes.items():
        best: int | None = None
        best_count = -1
        for pl, c in sorted(overlaps.get(gl, {}).items()):
            if pl == 0:
                continue
            if 2 * c >= size and c > best_count:
                best, best_count = pl, c
        matches[gl] = best
    return matches


def seg_score(gt: list[LabelImage], pred: list[LabelImage]) -> float:
    """Mean Jaccard of matched GT masks; unmatched masks score 0."""
    if len(gt) != len(pred):
        raise ValueError("sequences must have equal length")
    scores: list[float] = []
    for g, p in zip(gt, pred):
        if (g.height, g.width) != (p.height, p.width):
            raise ValueError("frame shapes differ")
        matches = _match_frame(g, p)
        for gl, pl in matches.items():
            if pl is None:
                scores.append(0.0)
                continue
            gmask = g.labels == gl
            pmask = p.labels == pl
            inter = int((gmask & pmask).sum())
            union = int((gmask | pmask).sum())
            scores.append(inter / union)
    if not scores:
        raise ValueError("ground truth contains no masks")
    return float(np.mean(scores))


def _graph_edges(graph: TrackGraph) -> dict[Edge, str]:
    """All lineage edges with their semantics ("track" or "parent")."""
    edges: dict[Edge, str] = {}
    by_id = graph.by_id()
    for tr in graph.tracks:
        for f in range(tr.start_frame, tr.end_frame):
            a = (f, graph.frame_labels[f][tr.track_id])
            b = (f + 1, graph.frame_labels[f + 1][tr.track_id])
            edges[(a, b)] = "track"
        if tr.parent_id:
            parent = by_id[tr.parent_id]
            a = (parent.end_frame, graph.frame_labels[parent.end_frame][tr.parent_id])
            b = (tr.start_frame, graph.frame_labels[tr.start_frame][tr.track_id])
            edges[(a, b)] = "parent"
    return edges


def aogm_scores(
    gt_graph: TrackGraph,
    gt_labels: list[LabelImage],
    pred_graph: TrackGraph,
    pred_labels: list[LabelImage],
    weights: AogmWeights = AogmWeights(),
) -> tuple[float, float, dict[str, int]]:
    """(DET, TRA, edit counts) from graph matching.

    Score = 1 - min(cost, cost_empty) / cost_empty, where cost_empty is
    the weighted cost of creating every GT vertex (and, for TRA, every
    GT edge) from an empty prediction.
    """
    if len(gt_labels) != len(pred_labels):
        raise ValueError("sequences must cover the same frame range")

    node_map: dict[Node, Node] = {}
    fn = fp = ns = 0
    n_gt_nodes = 0
    for f, (g, p) in enumerate(zip(gt_labels, pred_labels)):
        matches = _match_frame(g, p)
        n_gt_nodes += len(matches)
        matched_preds: dict[int, int] = {}
        for gl, pl in matches.items():
            if pl is None:
                fn += 1
            else:
                node_map[(f, gl)] = (f, pl)
                matched_preds[pl] = matched_preds.get(pl, 0) + 1
        for pl in map(int, p.instance_ids()):
            k = matched_preds.get(pl, 0)
            if k == 0:
                fp += 1
            elif k > 1:
                ns += k - 1

    gt_edges = _graph_edges(gt_graph)
    pred_edges = _graph_edges(pred_graph)
    ea = ec = 0
    used_pred_edges: set[Edge] = set()
    for (a, b), kind in gt_edges.items():
        pa, pb = node_map.get(a), node_map.get(b)
        mapped = (pa, pb) if pa is not None and pb is not None else None
        if mapped is None or mapped not in pred_edges:
            ea += 1
            continue
        used_pred_edges.add(mapped)
        if pred_edges[mapped] != kind:
            ec += 1
    ed = sum(1 for e in pred_edges if e not in used_pred_edges)

    counts = {"fn": fn, "fp": fp, "ns": ns, "ea": ea, "ed": ed, "ec": ec}
    w = weights
    det_cost = w.w_ns * ns + w.w_fn * fn + w.w_fp * fp
    det_empty = w.w_fn * n_gt_nodes
    tra_cost = det_cost + w.w_ed * ed + w.w_ea * ea + w.w_ec * ec
    tra_empty = det_empty + w.w_ea * len(gt_edges)
    if det_empty == 0:
        raise ValueError("ground truth graph has no vertices")
    det = 1.0 - min(det_cost, det_empty) / det_empty
    tra = 1.0 - min(tra_cost, tra_empty) / tra_empty
    return det, tra, counts


def motility_overlap(
    labels: list[LabelImage],
    graph: TrackGraph,
    quantile: float = 0.10,
) -> float:
    """Overlap threshold below which the most motile fraction of links lies.

    Overlap of a linked mask pair = intersection / smaller mask size; the
    value returned is the ``quantile``-th entry of the ascending-sorted
    overlaps (index ceil(q*n) - 1).
    """
    if not (0.0 < quantile < 1.0):
        raise ValueError("quantile must lie in (0, 1)")
    overlaps: list[float] = []
    for (fa, la), (fb, lb) in _graph_edges(graph):
        a = labels[fa].labels == la
        b = labels[fb].labels == lb
        inter = int((a & b).sum())
        overlaps.append(inter / min(int(a.sum()), int(b.sum())))
    if not overlaps:
        raise ValueError("track graph contains no links")
    overlaps.sort()
    idx = max(0, int(np.ceil(quantile * len(overlaps))) - 1)
    return overlaps[idx]


def evaluate(
    gt_graph: TrackGraph,
    gt_labels: list[LabelImage],
    pred_graph: TrackGraph,
    pred_labels: list[LabelImage],
    weights: AogmWeights = AogmWeights(),
) -> EvalReport:
    seg = seg_score(gt_labels, pred_labels)
    det, tra, counts = aogm_scores(gt_graph, gt_labels, pred_graph, pred_labels, weights)
    return EvalReport(
        seg=seg, det=det, tra=tra, op_ctb=(seg + tra) / 2.0, counts=counts
    )
