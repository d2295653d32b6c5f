import numpy as np
import pytest

from deskcrew.geometry import (
    capsule_capsule_distance,
    closest_point_on_segment,
    point_aabb_distance,
    segment_aabb_distance,
    segment_segment_distance,
)


def _sampled_seg_seg(p0, p1, q0, q1, n=400):
    ts = np.linspace(0, 1, n)
    a = p0[None] + ts[:, None] * (p1 - p0)[None]
    b = q0[None] + ts[:, None] * (q1 - q0)[None]
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return d.min()


def test_point_projection_clamps():
    t, p = closest_point_on_segment((2.0, 0.0, 0.0), np.zeros(3), np.array([1.0, 0.0, 0.0]))
    assert t == 1.0
    assert np.allclose(p, [1, 0, 0])


def test_segment_distance_simple_cross():
    # skew perpendicular segments 1 apart
    d = segment_segment_distance(
        np.array([-1.0, 0, 0]), np.array([1.0, 0, 0]),
        np.array([0, -1.0, 1.0]), np.array([0, 1.0, 1.0]),
    )
    assert d == pytest.approx(1.0, abs=1e-12)


def test_segment_distance_matches_dense_sampling():
    rng = np.random.default_rng(1)
    for _ in range(100):
        p0, p1, q0, q1 = rng.uniform(-1, 1, size=(4, 3))
        exact = segment_segment_distance(p0, p1, q0, q1)
        approx = _sampled_seg_seg(p0, p1, q0, q1)
        assert exact <= approx + 1e-9
        assert exact == pytest.approx(approx, abs=5e-3)


def test_parallel_segments():
    d = segment_segment_distance(
        np.array([0.0, 0, 0]), np.array([1.0, 0, 0]),
        np.array([0.0, 2.0, 0]), np.array([1.0, 2.0, 0]),
    )
    assert d == pytest.approx(2.0, abs=1e-12)


def test_point_aabb_inside_is_zero():
    assert point_aabb_distance((0.5, 0.5, 0.5), (0, 0, 0), (1, 1, 1)) == 0.0


def test_segment_aabb_matches_dense_sampling():
    rng = np.random.default_rng(2)
    lo = np.array([-0.3, -0.2, 0.0])
    hi = np.array([0.3, 0.2, 0.5])
    for _ in range(100):
        a, b = rng.uniform(-1, 1, size=(2, 3))
        exact = segment_aabb_distance(a, b, lo, hi)
        ts = np.linspace(0, 1, 2000)
        pts = a[None] + ts[:, None] * (b - a)[None]
        d = np.maximum(np.maximum(lo - pts, 0.0), pts - hi)
        approx = np.linalg.norm(d, axis=1).min()
        assert exact == pytest.approx(approx, abs=1e-3)
        assert exact <= approx + 1e-9


def test_capsule_capsule_overlap_sign():
    d = capsule_capsule_distance(
        np.array([0.0, 0, 0]), np.array([1.0, 0, 0]), 0.2,
        np.array([0.0, 0.3, 0]), np.array([1.0, 0.3, 0]), 0.2,
    )
    assert d == pytest.approx(-0.1, abs=1e-12)
