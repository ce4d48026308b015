"""Backward-in-time linking of instance masks into a lineage graph.

Each mask at frame t shifts its pixels by the predicted tracking offsets
and votes for the t-1 label containing most of them.  A t-1 mask with
one candidate continues its track; with exactly two it divides; any
other case opens new tracks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import LabelImage, VectorField
from .geometry import points_to_pixels, shift_pixels


@dataclass
class MatchTable:
    """Votes for one frame pair.

    ``candidate_of`` maps a t-label to its chosen t-1 label (absent when
    votes were ambiguous or went to background); ``votes`` keeps the raw
    counts per t-label; ``candidates_for`` inverts the candidate map.
    """

    candidate_of: dict[int, int] = field(default_factory=dict)
    votes: dict[int, dict[int, int]] = field(default_factory=dict)
    candidates_for: dict[int, list[int]] = field(default_factory=dict)


@dataclass(frozen=True)
class Track:
    track_id: int
    start_frame: int
    end_frame: int
    parent_id: int = 0


@dataclass
class TrackGraph:
    tracks: list[Track]
    #: per frame: track id -> mask label in that frame's LabelImage
    frame_labels: list[dict[int, int]]

    def by_id(self) -> dict[int, Track]:
        return {t.track_id: t for t in self.tracks}

    def validate(self) -> None:
        ids = [t.track_id for t in self.tracks]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate track ids")
        by_id = self.by_id()
        for t in self.tracks:
            if t.start_frame > t.end_frame:
                raise ValueError(f"track {t.track_id} starts after it ends")
            if t.parent_id:
                parent = by_id.get(t.parent_id)
                if parent is None:
                    raise ValueError(f"track {t.track_id} has unknown parent")
                if parent.end_frame >= t.start_frame:
                    raise ValueError(
                        f"parent {t.parent_id} overlaps child {t.track_id}"
                    )


def vote_predecessors(
    labels_t: LabelImage,
    track_off: VectorField,
    labels_tm1: LabelImage,
) -> MatchTable:
    """Count shifted-pixel hits of every t-mask on the t-1 labels."""
    h, w = labels_t.height, labels_t.width
    table = MatchTable()
    prev = labels_tm1.labels
    for m in labels_t.instance_ids():
        mask = labels_t.labels == m
        ex, ey = shift_pixels(track_off, mask)
        rows, cols, in_frame = points_to_pixels(ex, ey, h, w)
        hits = np.zeros(rows.size, dtype=np.int64)
        hits[in_frame] = prev[rows[in_frame], cols[in_frame]]
        labels_hit, counts = np.unique(hits, return_counts=True)
        table.votes[int(m)] = {int(l): int(c) for l, c in zip(labels_hit, counts)}
        top = counts.max()
        winners = labels_hit[counts == top]
        if winners.size != 1 or winners[0] == 0:
            continue  # ambiguous tie or background majority: no candidate
        prev_label = int(winners[0])
        table.candidate_of[int(m)] = prev_label
        table.candidates_for.setdefault(prev_label, []).append(int(m))
    return table


@dataclass(frozen=True)
class LinkDecision:
    """Outcome for one t-mask: continuation, division child, or new track."""

    kind: str  # "continue" | "child" | "new"
    predecessor: int = 0


def resolve_links(table: MatchTable) -> dict[int, LinkDecision]:
    """Turn the vote table into per-t-mask decisions."""
    decisions: dict[int, LinkDecision] = {}
    for prev_label, cands in table.candidates_for.items():
        if len(cands) == 1:
            decisions[cands[0]] = LinkDecision("continue", prev_label)
        elif len(cands) == 2:
            for c in cands:
                decisions[c] = LinkDecision("child", prev_label)
        else:
            for c in cands:
                decisions[c] = LinkDecision("new")
    for m in table.votes:
        decisions.setdefault(m, LinkDecision("new"))
    return decisions


def build_track_graph(
    decisions_per_pair: list[dict[int, LinkDecision]],
    label_images: list[LabelImage],
) -> TrackGraph:
    """Fold per-pair decisions into a TrackGraph with global ids.

    ``decisions_per_pair[i]`` holds the decisions for the pair
    (frame i+1, frame i).
    """
    if len(decisions_per_pair) != max(0, len(label_images) - 1):
        raise ValueError("need one decision map per consecutive frame pair")
    next_id = 0
    open_tracks: dict[int, dict] = {}  # label in current frame -> track state
    finished: list[dict] = []
    frame_labels: list[dict[int, int]] = []

    def new_track(label: int, frame: int, parent: int = 0) -> dict:
        nonlocal next_id
        next_id += 1
        return {
            "id": next_id,
            "start": frame,
            "end": frame,
            "parent": parent,
            "label": label,
        }

    if label_images:
        for label in sorted(label_images[0].instance_ids()):
            open_tracks[int(label)] = new_track(int(label), 0)
        frame_labels.append({t["id"]: lab for lab, t in open_tracks.items()})

    for t, decisions in enumerate(decisions_per_pair, start=1):
        succ: dict[int, dict] = {}
        continued_from: set[int] = set()
        for label in sorted(label_images[t].instance_ids()):
            label = int(label)
            dec = decisions.get(label, LinkDecision("new"))
            if dec.kind == "continue" and dec.predecessor in open_tracks:
                if dec.predecessor in continued_from:
                    raise RuntimeError(
                        f"mask {dec.predecessor} at frame {t - 1} continued twice"
                    )
                track = open_tracks.pop(dec.predecessor)
                track["end"] = t
                track["label"] = label
                succ[label] = track
                continued_from.add(dec.predecessor)
            elif dec.kind == "child" and dec.predecessor in open_tracks:
                parent = open_tracks[dec.predecessor]
                succ[label] = new_track(label, t, parent=parent["id"])
            else:
                succ[label] = new_track(label, t)
        # tracks without a successor end at t-1 (divided parents included)
        finished.extend(open_tracks.values())
        open_tracks = succ
        frame_labels.append({tr["id"]: lab for lab, tr in succ.items()})

    finished.extend(open_tracks.values())
    tracks = sorted(
        (
            Track(tr["id"], tr["start"], tr["end"], tr["parent"])
            for tr in finished
        ),
        key=lambda tr: tr.track_id,
    )
    graph = TrackGraph(tracks=tracks, frame_labels=frame_labels)
    graph.validate()
    return graph
