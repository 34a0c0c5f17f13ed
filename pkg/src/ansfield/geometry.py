"""Planar primitives shared by scene construction and visibility.

Everything operates on plain floats / numpy arrays; rectangles are
axis-aligned and stored as (x0, y0, x1, y1) with x0 < x1, y0 < y1.
"""

from __future__ import annotations

import math

import numpy as np

Rect = tuple[float, float, float, float]
Point = tuple[float, float]
Segment = tuple[Point, Point]


def rect_contains(rect: Rect, x: float, y: float) -> bool:
    """Closed containment test (boundary counts as inside)."""
    x0, y0, x1, y1 = rect
    return x0 <= x <= x1 and y0 <= y <= y1


def rect_contains_strict(rect: Rect, x: float, y: float) -> bool:
    """Open containment test (boundary counts as outside)."""
    x0, y0, x1, y1 = rect
    return x0 < x < x1 and y0 < y < y1


def rects_overlap(a: Rect, b: Rect) -> bool:
    """True when the interiors intersect; shared edges do not count."""
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


def point_segment_distance(px: float, py: float, seg: Segment) -> float:
    (ax, ay), (bx, by) = seg
    dx, dy = bx - ax, by - ay
    den = dx * dx + dy * dy
    if den == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / den
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def point_rect_distance(px: float, py: float, rect: Rect) -> float:
    """Distance from a point to the closed rectangle (0 inside)."""
    x0, y0, x1, y1 = rect
    dx = max(x0 - px, 0.0, px - x1)
    dy = max(y0 - py, 0.0, py - y1)
    return math.hypot(dx, dy)


def rect_rect_distance(a: Rect, b: Rect) -> float:
    """Distance between two closed rectangles (0 when they touch)."""
    dx = max(a[0] - b[2], b[0] - a[2], 0.0)
    dy = max(a[1] - b[3], b[1] - a[3], 0.0)
    return math.hypot(dx, dy)


def segments_cross(p: Point, q: Point, a: Point, b: Point) -> bool:
    """True when open segment (p,q) meets segment [a,b].

    Proper crossings and endpoint-of-(a,b)-on-(p,q) contacts count;
    collinear overlap of positive length counts as well.
    """

    def orient(ox, oy, ax_, ay_, bx_, by_):
        return (ax_ - ox) * (by_ - oy) - (ay_ - oy) * (bx_ - ox)

    d1 = orient(a[0], a[1], b[0], b[1], p[0], p[1])
    d2 = orient(a[0], a[1], b[0], b[1], q[0], q[1])
    d3 = orient(p[0], p[1], q[0], q[1], a[0], a[1])
    d4 = orient(p[0], p[1], q[0], q[1], b[0], b[1])

    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True

    # Collinear / touching cases: project onto the dominant axis and
    # require overlap of positive length for collinear segments, or an
    # endpoint of [a,b] strictly interior to (p,q).
    if d1 == 0 and d2 == 0 and d3 == 0 and d4 == 0:
        if abs(q[0] - p[0]) >= abs(q[1] - p[1]):
            lo1, hi1 = sorted((p[0], q[0]))
            lo2, hi2 = sorted((a[0], b[0]))
        else:
            lo1, hi1 = sorted((p[1], q[1]))
            lo2, hi2 = sorted((a[1], b[1]))
        return min(hi1, hi2) - max(lo1, lo2) > 0.0
    for (cx, cy), dp in ((a, d3), (b, d4)):
        if dp == 0:
            t = _param_on_segment(p, q, cx, cy)
            if t is not None and 0.0 < t < 1.0:
                return True
    return False


def _param_on_segment(p: Point, q: Point, x: float, y: float) -> float | None:
    dx, dy = q[0] - p[0], q[1] - p[1]
    if abs(dx) >= abs(dy):
        if dx == 0.0:
            return None
        return (x - p[0]) / dx
    return (y - p[1]) / dy


def segment_hits_rect_interior(p: Point, q: Point, rect: Rect) -> bool:
    """True when open segment (p,q) passes through the open rectangle.

    Liang-Barsky clipping: the parametric interval of the segment inside
    the closed slab is intersected with (0,1); a positive-length interval
    strictly inside all four slabs means the interior is crossed.
    """
    x0, y0, x1, y1 = rect
    px, py = p
    dx, dy = q[0] - px, q[1] - py
    t0, t1 = 0.0, 1.0
    for delta, lo, hi, start in ((dx, x0, x1, px), (dy, y0, y1, py)):
        if delta == 0.0:
            if start <= lo or start >= hi:
                return False
        else:
            ta = (lo - start) / delta
            tb = (hi - start) / delta
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
            if t0 >= t1:
                return False
    return t1 > t0


def segments_hit_rects(
    starts: np.ndarray, ends: np.ndarray, rects: np.ndarray
) -> np.ndarray:
    """Vectorized interior test: (S,2) x (S,2) segments against (R,4) rects.

    Returns a boolean (S,) array, true where the open segment crosses the
    open interior of ANY rectangle. Matches segment_hits_rect_interior.
    """
    if len(rects) == 0:
        return np.zeros(len(starts), dtype=bool)
    d = ends - starts  # (S,2)
    eps = np.finfo(np.float64).tiny
    lo = rects[:, 0:2]  # (R,2)
    hi = rects[:, 2:4]
    s = starts[:, None, :]  # (S,1,2)
    dv = d[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = (lo[None, :, :] - s) / dv
        tb = (hi[None, :, :] - s) / dv
    t_enter = np.minimum(ta, tb)
    t_exit = np.maximum(ta, tb)
    # Parallel-to-slab rays: inside the slab iff lo < start < hi.
    parallel = np.abs(dv) <= eps
    inside_slab = (s > lo[None, :, :]) & (s < hi[None, :, :])
    t_enter = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), t_enter)
    t_exit = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), t_exit)
    t0 = np.maximum(t_enter.max(axis=2), 0.0)  # (S,R)
    t1 = np.minimum(t_exit.min(axis=2), 1.0)
    hit_any = np.any(t1 > t0, axis=1)
    return hit_any


def segments_hit_walls(
    starts: np.ndarray, ends: np.ndarray, walls: np.ndarray
) -> np.ndarray:
    """Vectorized crossing test: segments (S,2)x2 against wall segments (W,4).

    True where the open segment (start,end) crosses a wall, including an
    endpoint of the wall lying strictly inside the segment. Collinear
    overlap is resolved by the scalar routine (rare; exact zeros only).
    """
    if len(walls) == 0:
        return np.zeros(len(starts), dtype=bool)
    p = starts[:, None, :]  # (S,1,2)
    q = ends[:, None, :]
    a = walls[None, :, 0:2]  # (1,W,2)
    b = walls[None, :, 2:4]

    def cross(o, u, v):
        return (u[..., 0] - o[..., 0]) * (v[..., 1] - o[..., 1]) - (
            u[..., 1] - o[..., 1]
        ) * (v[..., 0] - o[..., 0])

    d1 = cross(a, b, p)
    d2 = cross(a, b, q)
    d3 = cross(p, q, a)
    d4 = cross(p, q, b)
    proper = (((d1 > 0) & (d2 < 0)) | ((d1 < 0) & (d2 > 0))) & (
        ((d3 > 0) & (d4 < 0)) | ((d3 < 0) & (d4 > 0))
    )
    hit = proper
    degenerate = (d1 == 0) | (d2 == 0) | (d3 == 0) | (d4 == 0)
    if np.any(degenerate & ~proper):
        idx_s, idx_w = np.nonzero(degenerate & ~proper)
        extra = np.zeros_like(hit)
        for i, j in zip(idx_s, idx_w):
            extra[i, j] = segments_cross(
                (starts[i, 0], starts[i, 1]),
                (ends[i, 0], ends[i, 1]),
                (walls[j, 0], walls[j, 1]),
                (walls[j, 2], walls[j, 3]),
            )
        hit = hit | extra
    return np.any(hit, axis=1)


def rect_perimeter_points(rect: Rect, n: int) -> np.ndarray:
    """n boundary points at arc offsets (k + 0.5) * P / n, CCW from (x0,y0).

    The half-offset keeps samples off the corners so every sample
    belongs to exactly one face.
    """
    x0, y0, x1, y1 = rect
    w, h = x1 - x0, y1 - y0
    per = 2.0 * (w + h)
    s = (np.arange(n) + 0.5) * (per / n)
    pts = np.empty((n, 2), dtype=np.float64)
    # Faces in CCW order: bottom (y=y0), right, top, left.
    b0, b1, b2 = w, w + h, 2 * w + h
    on_bottom = s < b0
    on_right = (s >= b0) & (s < b1)
    on_top = (s >= b1) & (s < b2)
    on_left = s >= b2
    pts[on_bottom] = np.stack([x0 + s[on_bottom], np.full(on_bottom.sum(), y0)], 1)
    pts[on_right] = np.stack([np.full(on_right.sum(), x1), y0 + (s[on_right] - b0)], 1)
    pts[on_top] = np.stack([x1 - (s[on_top] - b1), np.full(on_top.sum(), y1)], 1)
    pts[on_left] = np.stack([np.full(on_left.sum(), x0), y1 - (s[on_left] - b2)], 1)
    return pts


def rect_face_normals(rect: Rect, n: int) -> np.ndarray:
    """Outward unit normal of the face each perimeter point lies on, (n,2)."""
    x0, y0, x1, y1 = rect
    w, h = x1 - x0, y1 - y0
    per = 2.0 * (w + h)
    s = (np.arange(n) + 0.5) * (per / n)
    b0, b1, b2 = w, w + h, 2 * w + h
    normals = np.empty((n, 2), dtype=np.float64)
    normals[s < b0] = (0.0, -1.0)
    normals[(s >= b0) & (s < b1)] = (1.0, 0.0)
    normals[(s >= b1) & (s < b2)] = (0.0, 1.0)
    normals[s >= b2] = (-1.0, 0.0)
    return normals


def merged_interval_measure(intervals: np.ndarray) -> float:
    """Total measure of a union of angular intervals on the circle.

    `intervals` is (K,2) of (start, end) with end >= start in unwrapped
    radians; entries are normalized mod 2*pi and split at the seam.
    """
    if len(intervals) == 0:
        return 0.0
    two_pi = 2.0 * math.pi
    segs: list[tuple[float, float]] = []
    for a, b in intervals:
        if b - a >= two_pi:
            return two_pi
        a_ = a % two_pi
        b_ = a_ + (b - a)
        if b_ <= two_pi:
            segs.append((a_, b_))
        else:
            segs.append((a_, two_pi))
            segs.append((0.0, b_ - two_pi))
    segs.sort()
    total = 0.0
    cur_lo, cur_hi = segs[0]
    for lo, hi in segs[1:]:
        if lo > cur_hi:
            total += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    total += cur_hi - cur_lo
    return min(total, two_pi)


def subtended_angle(rect: Rect, px: float, py: float) -> float:
    """Angle the whole rectangle subtends at an exterior point (< pi)."""
    x0, y0, x1, y1 = rect
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    angles = [math.atan2(cy - py, cx - px) for cx, cy in corners]
    best = 0.0
    for i in range(4):
        for j in range(i + 1, 4):
            d = abs(angles[i] - angles[j])
            d = min(d, 2.0 * math.pi - d)
            best = max(best, d)
    return best
