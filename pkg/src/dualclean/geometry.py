"""Planar geometry: convex polygons, oriented rectangles and their separation.

Polygons are tuples of ``(x, y)`` vertices in counter-clockwise order.  The
scalar routines are plain Python because the polygons involved are tiny
(3-8 vertices) and numpy call overhead would dominate; the ``points_*``
routines are vectorised over many query points.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

Point = tuple[float, float]
Polygon = tuple[Point, ...]
Pose = tuple[float, float, float]
AABB = tuple[float, float, float, float]


def wrap_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def rect_polygon(x0: float, y0: float, x1: float, y1: float) -> Polygon:
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


def body_rect(pose: Pose, x_min: float, x_max: float, y_min: float, y_max: float) -> Polygon:
    """Rectangle given in the body frame of ``pose``, returned in world frame (CCW)."""
    x, y, th = pose
    c, s = math.cos(th), math.sin(th)
    out = []
    for bx, by in ((x_min, y_min), (x_max, y_min), (x_max, y_max), (x_min, y_max)):
        out.append((x + c * bx - s * by, y + s * bx + c * by))
    return tuple(out)


def polygon_area(poly: Sequence[Point]) -> float:
    """Signed shoelace area (positive for CCW)."""
    a = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        a += x0 * y1 - x1 * y0
    return 0.5 * a


def ensure_ccw(poly: Sequence[Point]) -> Polygon:
    pts = tuple((float(x), float(y)) for x, y in poly)
    return pts if polygon_area(pts) >= 0 else tuple(reversed(pts))


def is_convex(poly: Sequence[Point], eps: float = 1e-12) -> bool:
    n = len(poly)
    if n < 3:
        return False
    sign = 0
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        cx, cy = poly[(i + 2) % n]
        cross = (bx - ax) * (cy - by) - (by - ay) * (cx - bx)
        if abs(cross) <= eps:
            continue
        s = 1 if cross > 0 else -1
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    return sign != 0


def aabb(poly: Iterable[Point]) -> AABB:
    xs, ys = zip(*poly)
    return (min(xs), min(ys), max(xs), max(ys))


def aabb_distance(a: AABB, b: AABB) -> float:
    """Euclidean distance between two boxes (0 when they overlap)."""
    dx = max(a[0] - b[2], b[0] - a[2], 0.0)
    dy = max(a[1] - b[3], b[1] - a[3], 0.0)
    return math.hypot(dx, dy)


def point_segment_distance(px: float, py: float, ax: float, ay: float, bx: float, by: float) -> float:
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 <= 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / L2
    t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
    return math.hypot(px - ax - t * dx, py - ay - t * dy)


def point_in_convex(px: float, py: float, poly: Polygon, eps: float = 1e-12) -> bool:
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        if (bx - ax) * (py - ay) - (by - ay) * (px - ax) < -eps:
            return False
    return True


def _axes(poly: Polygon) -> list[tuple[float, float]]:
    out = []
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        L = math.hypot(ex, ey)
        if L > 0.0:
            out.append((-ey / L, ex / L))
    return out


def sat_separation(a: Polygon, b: Polygon) -> float:
    """Largest separation along any edge normal of ``a`` or ``b``.

    Positive means a separating axis exists; a non-positive value is minus
    the penetration depth along the axis of least overlap.
    """
    best = -math.inf
    for axes in (_axes(a), _axes(b)):
        for nx, ny in axes:
            amin = amax = a[0][0] * nx + a[0][1] * ny
            for x, y in a[1:]:
                d = x * nx + y * ny
                if d < amin:
                    amin = d
                elif d > amax:
                    amax = d
            bmin = bmax = b[0][0] * nx + b[0][1] * ny
            for x, y in b[1:]:
                d = x * nx + y * ny
                if d < bmin:
                    bmin = d
                elif d > bmax:
                    bmax = d
            s = max(bmin - amax, amin - bmax)
            if s > best:
                best = s
    return best


def convex_gap(a: Polygon, b: Polygon) -> float:
    """Signed clearance between two convex polygons.

    Exact Euclidean distance when disjoint, minus the SAT penetration depth
    when they overlap.
    """
    s = sat_separation(a, b)
    if s <= 0.0:
        return s
    best = math.inf
    for p, q in ((a, b), (b, a)):
        n = len(q)
        for px, py in p:
            for i in range(n):
                ax, ay = q[i]
                bx, by = q[(i + 1) % n]
                d = point_segment_distance(px, py, ax, ay, bx, by)
                if d < best:
                    best = d
    return best


def closest_points(a: Polygon, b: Polygon) -> tuple[Point, Point, float]:
    """Closest pair of boundary points of two disjoint convex polygons."""
    best = (a[0], b[0], math.inf)
    for p, q, swap in ((a, b, False), (b, a, True)):
        n = len(q)
        for px, py in p:
            for i in range(n):
                ax, ay = q[i]
                bx, by = q[(i + 1) % n]
                dx, dy = bx - ax, by - ay
                L2 = dx * dx + dy * dy
                t = 0.0 if L2 <= 0 else max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / L2))
                cx, cy = ax + t * dx, ay + t * dy
                d = math.hypot(px - cx, py - cy)
                if d < best[2]:
                    best = ((cx, cy), (px, py), d) if swap else ((px, py), (cx, cy), d)
    return best


def box_inner_gap(poly: Polygon, bounds: AABB) -> float:
    """Signed clearance of ``poly`` from the walls of ``bounds`` (negative = outside)."""
    x0, y0, x1, y1 = bounds
    g = math.inf
    for x, y in poly:
        g = min(g, x - x0, x1 - x, y - y0, y1 - y)
    return g


def segment_hits_convex(p: Point, q: Point, poly: Polygon, eps: float = 1e-9) -> bool:
    """True if the open segment p-q passes through the interior of ``poly`` (Cyrus-Beck)."""
    t0, t1 = 0.0, 1.0
    dx, dy = q[0] - p[0], q[1] - p[1]
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        # inward normal for CCW polygon
        nx, ny = -(by - ay), bx - ax
        num = nx * (p[0] - ax) + ny * (p[1] - ay)
        den = nx * dx + ny * dy
        if abs(den) < 1e-15:
            if num < 0.0:
                return False
            continue
        t = -num / den
        if den > 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return False
    return t1 - t0 > eps


# --- vectorised helpers -------------------------------------------------------

def points_in_convex(pts: np.ndarray, poly: Polygon, eps: float = 1e-12) -> np.ndarray:
    """Inclusive containment test for an (N, 2) array of points."""
    P = np.asarray(poly, dtype=float)
    A = P
    B = np.roll(P, -1, axis=0)
    ex = (B[:, 0] - A[:, 0])[None, :]
    ey = (B[:, 1] - A[:, 1])[None, :]
    cross = ex * (pts[:, 1:2] - A[None, :, 1]) - ey * (pts[:, 0:1] - A[None, :, 0])
    return np.all(cross >= -eps, axis=1)


def points_polygon_distance(pts: np.ndarray, poly: Polygon) -> np.ndarray:
    """Distance from each point to a convex polygon (0 inside)."""
    P = np.asarray(poly, dtype=float)
    A = P
    B = np.roll(P, -1, axis=0)
    d = B - A
    L2 = np.maximum((d ** 2).sum(axis=1), 1e-300)
    rel = pts[:, None, :] - A[None, :, :]
    t = np.clip((rel * d[None]).sum(axis=2) / L2[None], 0.0, 1.0)
    proj = A[None] + t[..., None] * d[None]
    dist = np.sqrt(((pts[:, None, :] - proj) ** 2).sum(axis=2)).min(axis=1)
    dist[points_in_convex(pts, poly)] = 0.0
    return dist


def points_box_clearance(pts: np.ndarray, bounds: AABB) -> np.ndarray:
    x0, y0, x1, y1 = bounds
    return np.minimum.reduce([pts[:, 0] - x0, x1 - pts[:, 0], pts[:, 1] - y0, y1 - pts[:, 1]])


def world_to_body(pts: np.ndarray, pose: Pose) -> np.ndarray:
    x, y, th = pose
    c, s = math.cos(th), math.sin(th)
    dx = pts[:, 0] - x
    dy = pts[:, 1] - y
    return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=1)
