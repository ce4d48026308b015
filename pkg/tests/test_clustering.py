"""Seeded bandwidth clustering: smoothing, candidates, assignment."""

import math

import numpy as np
import pytest

from conftest import disk_labels
from segtrack.clustering import (
    ClusterConfig,
    cluster_frame,
    find_candidate_centers,
    min_mask_size_from_training,
    select_foreground,
    smooth_bandwidths,
)
from segtrack.fields import BandwidthField, ScalarField, VectorField
from segtrack.geometry import BANDWIDTH_SCALE_WEIGHT
from segtrack.metrics import seg_score
from segtrack.synth import SynthConfig, generate_sequence, ideal_predictions


def labels_equal_up_to_permutation(a, b):
    """True when two label images define the same partition of pixels."""
    if (a.labels > 0).sum() != (b.labels > 0).sum():
        return False
    return seg_score([a], [b]) == 1.0


class TestSmoothBandwidths:
    def test_constant_fixed_point(self):
        vals = np.full((2, 5, 5), 0.37)
        out = smooth_bandwidths(BandwidthField(vals))
        np.testing.assert_allclose(out.values, 0.37)

    def test_interior_impulse(self):
        vals = np.zeros((2, 5, 5))
        vals[0, 2, 2] = 0.9
        out = smooth_bandwidths(BandwidthField(vals))
        assert out.values[0, 2, 2] == pytest.approx(0.1)
        assert out.values[0, 2, 3] == pytest.approx(0.1)

    def test_corner_impulse_shrunken_window(self):
        vals = np.zeros((2, 5, 5))
        vals[1, 0, 0] = 0.8
        out = smooth_bandwidths(BandwidthField(vals))
        assert out.values[1, 0, 0] == pytest.approx(0.2)  # 0.8 / 4


class TestSelectForeground:
    def test_all_zero(self):
        fg = select_foreground(ScalarField(np.zeros((3, 3))), ClusterConfig())
        assert not fg.any()

    def test_exact_threshold_excluded(self):
        fg = select_foreground(ScalarField(np.full((2, 2), 0.5)), ClusterConfig())
        assert not fg.any()

    def test_mixed_values(self):
        seed = ScalarField(np.array([[0.4, 0.6, 0.9]]))
        fg = select_foreground(seed, ClusterConfig())
        np.testing.assert_array_equal(fg, [[False, True, True]])


class TestCandidateCenters:
    def _votes(self, targets, seeds, h=16, w=16):
        """Shifted positions landing exactly on the given grid cells."""
        ex = np.array([c / w for _, c in targets], dtype=np.float64)
        ey = np.array([r / h for r, _ in targets], dtype=np.float64)
        return find_candidate_centers(
            ex, ey, np.asarray(seeds, dtype=np.float64), h, w, ClusterConfig()
        )

    def test_six_votes_make_a_candidate(self):
        cands, _, _ = self._votes([(5, 5)] * 6, [0.8] * 6)
        assert (5, 5) in cands

    def test_five_votes_do_not(self):
        cands, _, _ = self._votes([(5, 5)] * 5, [0.8] * 5)
        assert cands == []

    def test_order_by_founding_seediness(self):
        targets = [(3, 3)] * 6 + [(12, 12)] * 6
        seeds = [0.7] * 6 + [0.9] * 6
        cands, founding, _ = self._votes(targets, seeds)
        assert cands[0] == (12, 12)
        assert founding[12, 12] == pytest.approx(0.9)
        assert founding[3, 3] == pytest.approx(0.7)
        # the first candidates of each 3x3 block come before the rest
        assert cands.index((12, 12)) < cands.index((3, 3))

    def test_out_of_frame_votes_dropped(self):
        ex = np.full(6, -0.2)
        ey = np.full(6, 0.5)
        cands, _, _ = find_candidate_centers(
            ex, ey, np.full(6, 0.9), 16, 16, ClusterConfig()
        )
        assert cands == []


class TestMinMaskSize:
    def test_default_without_training_data(self):
        assert min_mask_size_from_training([]) == 2

    def test_half_of_low_percentile(self):
        # the two smallest of 100 samples are both 40, so the 1%
        # percentile is 40 regardless of interpolation; half -> 20
        sizes = [40] * 2 + [100] * 98
        assert min_mask_size_from_training(sizes) == 20


class TestClusterFrame:
    def test_oracle_round_trip(self):
        cfg = SynthConfig(h=128, w=128, n_cells=6, frames=1, seed=5)
        seq = generate_sequence(cfg)
        pred = ideal_predictions(seq.labels[0], seq.labels[0], {})
        out = cluster_frame(
            pred.seg_t.offsets, pred.seg_t.bandwidths, pred.seg_t.seediness
        )
        assert labels_equal_up_to_permutation(out.labels, seq.labels[0])
        assert out.labels.instance_ids().size == 6

    def test_uniform_zero_seediness(self):
        h = w = 16
        out = cluster_frame(
            VectorField(np.zeros((2, h, w))),
            BandwidthField(np.full((2, h, w), 0.5)),
            ScalarField(np.zeros((h, w))),
        )
        assert out.labels.instance_ids().size == 0

    def test_min_mask_size_rejection(self):
        # ideal single-cell predictions, but min_mask_size above the cell
        labels = disk_labels(32, 32, [(16, 16)], 4)
        pred = ideal_predictions(labels, labels, {})
        cfg = ClusterConfig(min_mask_size=200)
        out = cluster_frame(
            pred.seg_t.offsets, pred.seg_t.bandwidths, pred.seg_t.seediness, cfg
        )
        assert out.labels.instance_ids().size == 0
        assert out.rejected > 0

    def test_output_respects_foreground_and_size(self, rng):
        off = VectorField(rng.uniform(-0.05, 0.05, size=(2, 32, 32)))
        bw = BandwidthField(rng.uniform(0.2, 0.8, size=(2, 32, 32)))
        seed = ScalarField(rng.uniform(0, 1, size=(32, 32)))
        cfg = ClusterConfig(min_mask_size=3)
        out = cluster_frame(off, bw, seed, cfg)
        fg = select_foreground(seed, cfg)
        assert not out.labels.labels[~fg].any()
        for lab in out.labels.instance_ids():
            assert (out.labels.labels == lab).sum() >= 3

    def test_determinism(self, rng):
        off = VectorField(rng.uniform(-0.05, 0.05, size=(2, 32, 32)))
        bw = BandwidthField(rng.uniform(0.2, 0.8, size=(2, 32, 32)))
        seed = ScalarField(rng.uniform(0, 1, size=(32, 32)))
        a = cluster_frame(off, bw, seed)
        b = cluster_frame(off, bw, seed)
        np.testing.assert_array_equal(a.labels.labels, b.labels.labels)
        assert a.centers == b.centers


class TestReassignment:
    def _fixture(self):
        """Two vote groups; a middle pixel scores 0.6 at the first-processed
        candidate and 0.8 at the second, so it must change hands."""
        h = w = 32
        c1 = (10, 10)
        c2 = (10, 20)
        # common scaled bandwidth s such that distances a (to c1) and b
        # (to c2) with a + b = |c2 - c1| give scores 0.6 and 0.8
        gap = (c2[1] - c1[1]) / w
        ratio = math.sqrt(math.log(0.6) / math.log(0.8))
        b = gap / (1.0 + ratio)
        a = gap - b
        s = b * b / -math.log(0.8)
        raw = math.log(s) / BANDWIDTH_SCALE_WEIGHT
        assert 0.0 < raw < 1.0

        off = np.zeros((2, h, w))
        seed = np.zeros((h, w))
        group1 = [(r, 2) for r in range(2, 8)]
        group2 = [(r, 28) for r in range(2, 8)]
        for (r, c), target, s_val in (
            [(p, c1, 0.95) for p in group1] + [(p, c2, 0.90) for p in group2]
        ):
            off[0, r, c] = target[1] / w - c / w
            off[1, r, c] = target[0] / h - r / h
            seed[r, c] = s_val
        # the contested pixel: shifted position on the c1-c2 axis
        mid = (20, 15)
        off[0, mid[0], mid[1]] = (c1[1] / w + a) - mid[1] / w
        off[1, mid[0], mid[1]] = c1[0] / h - mid[0] / h
        seed[mid] = 0.8
        bw = BandwidthField(np.full((2, h, w), raw))
        return VectorField(off), bw, ScalarField(seed), mid, group1, group2

    def test_contested_pixel_moves_to_second_cluster(self):
        off, bw, seed, mid, group1, group2 = self._fixture()
        out = cluster_frame(off, bw, seed)
        labs = out.labels.labels
        first = labs[group1[0]]
        second = labs[group2[0]]
        assert first != 0 and second != 0 and first != second
        assert all(labs[p] == first for p in group1)
        assert all(labs[p] == second for p in group2)
        # 0.6 at the earlier candidate, 0.8 at the later one: reassigned
        assert labs[mid] == second

    def test_reassignment_blocked_at_lower_score(self):
        # flip the geometry: 0.8 first, 0.6 second -> the pixel stays
        off, bw, seed, mid, group1, group2 = self._fixture()
        vals = seed.values.copy()
        for r, c in group1:
            vals[r, c] = 0.90
        for r, c in group2:
            vals[r, c] = 0.95
        out = cluster_frame(off, bw, ScalarField(vals))
        labs = out.labels.labels
        # now c2's cluster claims first at 0.8; c1 offers only 0.6
        assert labs[mid] == labs[group2[0]]


class TestBandwidthMonotonicity:
    def _two_cell_fixture(self, raw_shift=0.0):
        """Two cells 24 px apart with offsets damped halfway to the center,
        spreading shifted positions over ~3 px around each medoid."""
        h = w = 64
        labels = disk_labels(h, w, [(32, 20), (32, 44)], 6)
        base_rho_px = 9.0
        s = (base_rho_px / w) ** 2 / math.log(2.0)
        raw = math.log(s) / BANDWIDTH_SCALE_WEIGHT + raw_shift
        assert 0.0 <= raw <= 1.0
        off = np.zeros((2, h, w))
        seed = np.zeros((h, w))
        for m, (cy, cx) in ((1, (32, 20)), (2, (32, 44))):
            rows, cols = labels.pixels(m)
            off[0, rows, cols] = 0.5 * (cx - cols) / w
            off[1, rows, cols] = 0.5 * (cy - rows) / h
            seed[rows, cols] = 0.9
        bw = BandwidthField(np.full((2, h, w), np.clip(raw, 0.0, 1.0)))
        return labels, VectorField(off), bw, ScalarField(seed)

    def test_base_bandwidth_two_clusters(self):
        labels, off, bw, seed = self._two_cell_fixture()
        out = cluster_frame(off, bw, seed)
        assert out.labels.instance_ids().size == 2

    def test_shrinking_tenfold_splits(self):
        # s / 10 on the scaled bandwidth = raw + ln(10)/10
        labels, off, bw, seed = self._two_cell_fixture(
            raw_shift=math.log(10.0) / 10.0
        )
        out = cluster_frame(off, bw, seed)
        rows, cols = labels.pixels(1)
        covering = {int(l) for l in out.labels.labels[rows, cols] if l != 0}
        assert len(covering) >= 2

    def test_enlarging_tenfold_merges(self):
        labels, off, bw, seed = self._two_cell_fixture(
            raw_shift=-math.log(10.0) / 10.0
        )
        out = cluster_frame(off, bw, seed)
        assert out.labels.instance_ids().size == 1
        # the single cluster spans both cells (a few extreme edge pixels
        # may fall just outside the enlarged ellipse)
        lab = out.labels.labels
        for m in (1, 2):
            rows, cols = labels.pixels(m)
            assert (lab[rows, cols] == 1).mean() > 0.9
