"""Closest-point distance primitives: segments, capsules, spheres, axis-aligned boxes.

All inputs are 3-vectors in meters (numpy arrays or sequences). Distances are
surface-to-surface for shaped queries; a value <= 0 means contact/overlap.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-12


def _as_vec(p) -> np.ndarray:
    v = np.asarray(p, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    return v


def closest_point_on_segment(p, a, b) -> tuple[float, np.ndarray]:
    """Project point p onto segment [a, b]; returns (t in [0,1], point)."""
    p, a, b = _as_vec(p), _as_vec(a), _as_vec(b)
    ab = b - a
    denom = float(np.dot(ab, ab))
    if denom < _EPS:
        return 0.0, a
    t = float(np.dot(p - a, ab)) / denom
    t = min(1.0, max(0.0, t))
    return t, a + t * ab


def segment_segment_distance(p0, p1, q0, q1) -> float:
    """Minimum distance between segments [p0,p1] and [q0,q1].

    Candidate-based: the interior critical point (when the lines are not
    parallel) plus the four edge projections always contain the minimizer.
    """
    p0, p1, q0, q1 = _as_vec(p0), _as_vec(p1), _as_vec(q0), _as_vec(q1)
    u = p1 - p0
    v = q1 - q0
    w0 = p0 - q0
    a = float(np.dot(u, u))
    b = float(np.dot(u, v))
    c = float(np.dot(v, v))
    d = float(np.dot(u, w0))
    e = float(np.dot(v, w0))
    det = a * c - b * b

    candidates = []
    if det > _EPS:
        s = (b * e - c * d) / det
        t = (a * e - b * d) / det
        if 0.0 <= s <= 1.0 and 0.0 <= t <= 1.0:
            candidates.append((p0 + s * u, q0 + t * v))
    for q in (q0, q1):
        _, p = closest_point_on_segment(q, p0, p1)
        candidates.append((p, q))
    for p in (p0, p1):
        _, q = closest_point_on_segment(p, q0, q1)
        candidates.append((p, q))

    best = min(float(np.dot(p - q, p - q)) for p, q in candidates)
    return float(np.sqrt(best))


def point_aabb_distance(p, box_min, box_max) -> float:
    """Distance from a point to an axis-aligned box (0 inside)."""
    p, lo, hi = _as_vec(p), _as_vec(box_min), _as_vec(box_max)
    d = np.maximum(np.maximum(lo - p, 0.0), p - hi)
    return float(np.linalg.norm(d))


def segment_aabb_distance(a, b, box_min, box_max, tol: float = 1e-10) -> float:
    """Minimum distance from segment [a,b] to an axis-aligned box.

    Point-to-box distance is convex, so its restriction to the segment is a
    convex 1-D function; golden-section search converges to the exact
    minimizer within tol.
    """
    a, b = _as_vec(a), _as_vec(b)
    lo, hi = _as_vec(box_min), _as_vec(box_max)

    def f(t: float) -> float:
        return point_aabb_distance(a + t * (b - a), lo, hi)

    left, right = 0.0, 1.0
    fl, fr = f(left), f(right)
    if fl <= 0.0 or fr <= 0.0:
        return 0.0
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = right - inv_phi * (right - left)
    x2 = left + inv_phi * (right - left)
    f1, f2 = f(x1), f(x2)
    while (right - left) > tol:
        if f1 <= f2:
            right, x2, f2 = x2, x1, f1
            x1 = right - inv_phi * (right - left)
            f1 = f(x1)
        else:
            left, x1, f1 = x1, x2, f2
            x2 = left + inv_phi * (right - left)
            f2 = f(x2)
        if min(f1, f2) <= 0.0:
            return 0.0
    return min(fl, fr, f1, f2)


def capsule_capsule_distance(p0, p1, r1: float, q0, q1, r2: float) -> float:
    """Surface distance between two capsules (negative when overlapping)."""
    return segment_segment_distance(p0, p1, q0, q1) - (r1 + r2)


def capsule_sphere_distance(p0, p1, r: float, center, sphere_r: float) -> float:
    _, nearest = closest_point_on_segment(center, p0, p1)
    return float(np.linalg.norm(nearest - _as_vec(center))) - (r + sphere_r)


def capsule_aabb_distance(p0, p1, r: float, box_min, box_max) -> float:
    return segment_aabb_distance(p0, p1, box_min, box_max) - r
