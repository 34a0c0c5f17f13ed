import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ansfield.geometry import (
    merged_interval_measure,
    point_rect_distance,
    rect_face_normals,
    rect_perimeter_points,
    rect_rect_distance,
    rects_overlap,
    segment_hits_rect_interior,
    segments_cross,
    segments_hit_rects,
    segments_hit_walls,
    subtended_angle,
)

coord = st.floats(-10, 10, allow_nan=False, width=64)


def make_rect(x0, y0, w, h):
    return (x0, y0, x0 + w, y0 + h)


pos = st.floats(0.1, 5, allow_nan=False, width=64)
rect_st = st.builds(make_rect, coord, coord, pos, pos)


def test_rects_overlap_shared_edge_does_not_count():
    assert not rects_overlap((0, 0, 1, 1), (1, 0, 2, 1))
    assert rects_overlap((0, 0, 1, 1), (0.5, 0.5, 2, 2))


def test_point_rect_distance_inside_and_out():
    r = (0.0, 0.0, 2.0, 1.0)
    assert point_rect_distance(1.0, 0.5, r) == 0.0
    assert point_rect_distance(3.0, 0.5, r) == pytest.approx(1.0)
    assert point_rect_distance(3.0, 2.0, r) == pytest.approx(math.hypot(1, 1))


@given(rect_st, rect_st)
def test_rect_rect_distance_matches_corner_scan(a, b):
    # Oracle: min distance between dense point grids on both boundaries.
    pa = rect_perimeter_points(a, 64)
    pb = rect_perimeter_points(b, 64)
    d = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(-1)).min()
    got = rect_rect_distance(a, b)
    if rects_overlap(a, b):
        assert got == 0.0
    else:
        assert got <= d + 1e-12
        # The dense scan overestimates by at most the sample spacing.
        spacing = max(
            (2 * (a[2] - a[0] + a[3] - a[1])) / 64,
            (2 * (b[2] - b[0] + b[3] - b[1])) / 64,
        )
        assert got >= d - spacing


def test_segments_cross_basic():
    assert segments_cross((0, 0), (2, 2), (0, 2), (2, 0))
    assert not segments_cross((0, 0), (1, 0), (0, 1), (1, 1))
    # Wall endpoint strictly inside the sight segment counts.
    assert segments_cross((0, 0), (2, 0), (1, 0), (1, 1))
    # Touching only at the sight segment's own endpoint does not.
    assert not segments_cross((0, 0), (1, 0), (1, 0), (1, 1))


def test_segment_hits_rect_interior_tangent_edge():
    r = (1.0, 1.0, 2.0, 2.0)
    assert segment_hits_rect_interior((0, 1.5), (3, 1.5), r)
    # Sliding along an edge never enters the open interior.
    assert not segment_hits_rect_interior((0, 1.0), (3, 1.0), r)
    assert not segment_hits_rect_interior((0, 0), (0.5, 0.5), r)


segment_st = st.tuples(coord, coord, coord, coord)


@given(st.lists(segment_st, min_size=1, max_size=8), st.lists(rect_st, min_size=1, max_size=4))
@settings(max_examples=200)
def test_segments_hit_rects_matches_scalar(segs, rects):
    starts = np.array([(s[0], s[1]) for s in segs], dtype=np.float64)
    ends = np.array([(s[2], s[3]) for s in segs], dtype=np.float64)
    rects_arr = np.array(rects, dtype=np.float64)
    got = segments_hit_rects(starts, ends, rects_arr)
    want = [
        any(segment_hits_rect_interior((s[0], s[1]), (s[2], s[3]), r) for r in rects)
        for s in segs
    ]
    assert got.tolist() == want


@given(st.lists(segment_st, min_size=1, max_size=8), st.lists(segment_st, min_size=1, max_size=4))
@settings(max_examples=200)
def test_segments_hit_walls_matches_scalar(segs, walls):
    starts = np.array([(s[0], s[1]) for s in segs], dtype=np.float64)
    ends = np.array([(s[2], s[3]) for s in segs], dtype=np.float64)
    walls_arr = np.array(walls, dtype=np.float64)
    got = segments_hit_walls(starts, ends, walls_arr)
    want = [
        any(
            segments_cross((s[0], s[1]), (s[2], s[3]), (w[0], w[1]), (w[2], w[3]))
            for w in walls
        )
        for s in segs
    ]
    assert got.tolist() == want


def test_perimeter_points_land_on_boundary_with_uniform_spacing():
    r = (0.0, 0.0, 3.0, 1.0)
    for n in (8, 64, 257):
        pts = rect_perimeter_points(r, n)
        assert pts.shape == (n, 2)
        on_edge = (
            np.isclose(pts[:, 0], 0)
            | np.isclose(pts[:, 0], 3)
            | np.isclose(pts[:, 1], 0)
            | np.isclose(pts[:, 1], 1)
        )
        assert on_edge.all()
        # Consecutive arc-length gaps are all P/n by construction; check
        # chord lengths never exceed the arc spacing.
        gaps = np.sqrt(((pts - np.roll(pts, 1, axis=0)) ** 2).sum(1))
        assert (gaps <= 8.0 / n + 1e-12).all()


def test_face_normals_point_away_from_center():
    r = (1.0, 2.0, 4.0, 3.0)
    pts = rect_perimeter_points(r, 64)
    nrm = rect_face_normals(r, 64)
    cx, cy = 2.5, 2.5
    outward = ((pts[:, 0] - cx) * nrm[:, 0] + (pts[:, 1] - cy) * nrm[:, 1]) > 0
    assert outward.all()


interval_st = st.tuples(
    st.floats(-10, 10, allow_nan=False, width=64), st.floats(0, 4, allow_nan=False, width=64)
)


@given(st.lists(interval_st, min_size=0, max_size=10))
@settings(max_examples=200)
def test_merged_interval_measure_against_dense_grid(raw):
    intervals = np.array([(a, a + w) for a, w in raw], dtype=np.float64).reshape(-1, 2)
    got = merged_interval_measure(intervals)
    # Oracle: indicator on a dense circular grid.
    grid = np.linspace(0, 2 * math.pi, 200_001)[:-1]
    covered = np.zeros_like(grid, dtype=bool)
    for a, b in intervals:
        if b - a >= 2 * math.pi:
            covered[:] = True
            break
        a_, b_ = a % (2 * math.pi), a % (2 * math.pi) + (b - a)
        covered |= (grid >= a_) & (grid < b_)
        if b_ > 2 * math.pi:
            covered |= grid < (b_ - 2 * math.pi)
    want = covered.mean() * 2 * math.pi
    assert got == pytest.approx(want, abs=1e-3)


def test_subtended_angle_square_from_afar():
    # A unit square seen face-on from far away subtends roughly its
    # lateral width over the distance to the near face.
    r = (0.0, 0.0, 1.0, 1.0)
    got = subtended_angle(r, 100.5, 0.5)
    assert got == pytest.approx(1.0 / 99.5, rel=0.02)
    # From just outside a face, the angle approaches pi.
    assert subtended_angle(r, 0.5, 1.0 + 1e-6) == pytest.approx(math.pi, abs=1e-2)
