"""Coordinate grid, kernel, shifting and medoid behavior."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segtrack.fields import NormalizedPoint, VectorField
from segtrack.geometry import (
    BANDWIDTH_SCALE_WEIGHT,
    coordinate_grid,
    gaussian_distance,
    medoid,
    medoid_of_arrays,
    normalize_coords,
    points_to_pixels,
    round_half_down,
    scale_bandwidth,
    shift_pixels,
)


class TestNormalizeCoords:
    def test_origin(self):
        p = normalize_coords(0, 0, 256, 256)
        assert (p.x, p.y) == (0.0, 0.0)

    def test_exact_fractions(self):
        p = normalize_coords(128, 64, 256, 256)
        assert (p.x, p.y) == (0.25, 0.5)

    def test_last_pixel(self):
        p = normalize_coords(255, 255, 256, 256)
        assert p.x == pytest.approx(0.99609375, abs=0)
        assert p.y == pytest.approx(0.99609375, abs=0)

    def test_out_of_range_raises(self):
        with pytest.raises(ValueError):
            normalize_coords(256, 0, 256, 256)
        with pytest.raises(ValueError):
            normalize_coords(0, -1, 256, 256)


class TestScaleBandwidth:
    def test_zero_maps_to_one(self):
        assert scale_bandwidth((0.0, 0.0)).tolist() == [1.0, 1.0]

    def test_point_two(self):
        s = scale_bandwidth((0.2, 0.2))
        assert s == pytest.approx([math.exp(-2.0)] * 2, rel=1e-12)

    def test_upper_end(self):
        s = scale_bandwidth((1.0, 1.0))
        assert s == pytest.approx([math.exp(-10.0)] * 2, rel=1e-12)

    def test_out_of_range_raises(self):
        with pytest.raises(ValueError):
            scale_bandwidth((1.2, 0.0))

    def test_monotone_decreasing_for_negative_weight(self):
        values = np.linspace(0, 1, 11)
        scaled = [scale_bandwidth((v, v))[0] for v in values]
        assert all(a > b for a, b in zip(scaled, scaled[1:]))


class TestGaussianDistance:
    def test_zero_displacement(self):
        c = NormalizedPoint(0.5, 0.5)
        assert gaussian_distance(c, c, (0.003, 0.7)) == 1.0

    def test_direct_value(self):
        d = gaussian_distance(
            NormalizedPoint(0.5, 0.5), NormalizedPoint(0.6, 0.5), (0.02, 0.02)
        )
        assert d == pytest.approx(math.exp(-0.5), rel=1e-12)

    def test_diagonal_value(self):
        d = gaussian_distance(
            NormalizedPoint(0.5, 0.5), NormalizedPoint(0.6, 0.6), (0.01, 0.01)
        )
        assert d == pytest.approx(math.exp(-2.0), rel=1e-12)

    def test_nonpositive_bandwidth_raises(self):
        c = NormalizedPoint(0.5, 0.5)
        with pytest.raises(ValueError):
            gaussian_distance(c, c, (0.0, 0.1))

    @given(
        cx=st.floats(0, 1), cy=st.floats(0, 1),
        px=st.floats(0, 1), py=st.floats(0, 1),
        sx=st.floats(1e-4, 1.0), sy=st.floats(1e-4, 1.0),
    )
    @settings(max_examples=200)
    def test_symmetric_and_bounded(self, cx, cy, px, py, sx, sy):
        a = gaussian_distance(NormalizedPoint(cx, cy), NormalizedPoint(px, py), (sx, sy))
        b = gaussian_distance(NormalizedPoint(px, py), NormalizedPoint(cx, cy), (sx, sy))
        assert a == b
        # may underflow to exactly 0.0 for extreme displacement/bandwidth
        assert 0.0 <= a <= 1.0

    def test_strictly_decreasing_in_displacement(self):
        c = NormalizedPoint(0.5, 0.5)
        ds = [
            gaussian_distance(c, NormalizedPoint(0.5 + dx, 0.5), (0.01, 0.01))
            for dx in np.linspace(0, 0.4, 9)
        ]
        assert all(a > b for a, b in zip(ds, ds[1:]))

    def test_half_contour_on_ellipse(self):
        # d = 0.5 exactly on (cx-px)^2/sx + (cy-py)^2/sy = ln 2
        sx, sy = 0.013, 0.004
        for theta in np.linspace(0, 2 * math.pi, 17):
            dx = math.sqrt(sx * math.log(2.0)) * math.cos(theta)
            dy = math.sqrt(sy * math.log(2.0)) * math.sin(theta)
            d = gaussian_distance(
                NormalizedPoint(0.5, 0.5), NormalizedPoint(0.5 + dx, 0.5 + dy), (sx, sy)
            )
            assert d == pytest.approx(0.5, abs=1e-12)


class TestShiftPixels:
    def test_zero_offsets_identity(self):
        field = VectorField(np.zeros((2, 4, 6)))
        ex, ey = shift_pixels(field)
        xs, ys = coordinate_grid(4, 6)
        np.testing.assert_array_equal(ex, xs.ravel())
        np.testing.assert_array_equal(ey, ys.ravel())

    def test_single_offset(self):
        values = np.zeros((2, 256, 256))
        values[0, 128, 128] = 0.1
        mask = np.zeros((256, 256), dtype=bool)
        mask[128, 128] = True
        ex, ey = shift_pixels(VectorField(values), mask)
        assert ex[0] == pytest.approx(0.6)
        assert ey[0] == pytest.approx(0.5)

    def test_out_of_frame_not_clamped(self):
        values = np.zeros((2, 10, 10))
        values[:, 0, 0] = -0.1
        mask = np.zeros((10, 10), dtype=bool)
        mask[0, 0] = True
        ex, ey = shift_pixels(VectorField(values), mask)
        assert ex[0] == pytest.approx(-0.1)
        assert ey[0] == pytest.approx(-0.1)
        _, _, in_frame = points_to_pixels(ex, ey, 10, 10)
        assert not in_frame[0]


class TestRounding:
    def test_half_ties_go_down(self):
        vals = np.array([0.5, 1.5, 2.5, -0.5, 2.49, 2.51])
        np.testing.assert_array_equal(round_half_down(vals), [0, 1, 2, -1, 2, 3])

    def test_points_to_pixels_flags(self):
        rows, cols, ok = points_to_pixels(
            np.array([0.5, 1.2, -0.2]), np.array([0.5, 0.5, 0.5]), 10, 10
        )
        np.testing.assert_array_equal(cols, [5, 12, -2])
        np.testing.assert_array_equal(rows, [5, 5, 5])
        np.testing.assert_array_equal(ok, [True, False, False])


class TestMedoid:
    def test_singleton(self):
        assert medoid({(0, 0)}) == (0, 0)

    def test_collinear_triple(self):
        assert medoid({(0, 0), (0, 1), (0, 2)}) == (0, 1)

    def test_outlier_case(self):
        # brute force sums: (0,0) -> 1 + 1 + sqrt(50) = 9.071,
        # (0,1) and (1,0) -> 1 + sqrt(2) + sqrt(41) = 8.817; the tie
        # between those two breaks to the lexicographically lower (0,1)
        assert medoid({(0, 0), (0, 1), (1, 0), (5, 5)}) == (0, 1)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            medoid(set())

    def test_tie_breaks_low_lexicographic(self):
        # two points are each other's mirror; lowest (row, col) wins
        assert medoid([(3, 4), (1, 2)]) == (1, 2)

    @given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)),
                    min_size=1, max_size=30))
    @settings(max_examples=200)
    def test_member_and_permutation_invariant(self, pts):
        m = medoid(pts)
        assert m in {(r, c) for r, c in pts}
        assert medoid(list(reversed(pts))) == m

    def test_matches_array_variant(self, rng):
        rows = rng.integers(0, 50, size=40)
        cols = rng.integers(0, 50, size=40)
        assert medoid(zip(rows, cols)) == medoid_of_arrays(rows, cols)

    def test_medoid_inside_c_shape(self):
        # concave mask: centroid falls outside, the medoid must not
        img = np.zeros((20, 20), dtype=np.int64)
        img[2:18, 2:5] = 1
        img[2:5, 2:18] = 1
        img[15:18, 2:18] = 1
        rows, cols = np.nonzero(img)
        m = medoid_of_arrays(rows, cols)
        assert img[m] == 1
