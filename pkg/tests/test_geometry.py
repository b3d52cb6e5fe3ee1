import numpy as np
import pytest

from procscene.errors import DegenerateRotation, InvalidScale
from procscene.geometry import (
    OrientedBox,
    bottom_surface_height,
    clip_convex,
    contains_point,
    contains_points,
    convex_hull_2d,
    expand_box,
    footprint,
    footprint_overlap_area,
    horizontal_overlap_ratio,
    matrix_to_rotation,
    obb_intersects,
    polygon_area,
    rotation_to_matrix,
    top_surface_height,
    yaw_of,
    yaw_rotation,
)


def axis_angle(axis, angle):
    """Rodrigues formula, used as an independent rotation oracle."""
    k = np.asarray(axis, float) / np.linalg.norm(axis)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * kx @ kx


def test_six_d_round_trips_axis_angle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        r = axis_angle(rng.normal(size=3), rng.uniform(-np.pi, np.pi))
        np.testing.assert_allclose(rotation_to_matrix(matrix_to_rotation(r)), r, atol=1e-12)


def test_gram_schmidt_gives_proper_rotation():
    rng = np.random.default_rng(1)
    for _ in range(100):
        m = rotation_to_matrix(rng.normal(size=6) * rng.uniform(0.01, 100))
        np.testing.assert_allclose(m.T @ m, np.eye(3), atol=1e-12)
        assert np.linalg.det(m) == pytest.approx(1.0)


@pytest.mark.parametrize("r", [np.zeros(6), [1, 0, 0, 0, 0, 0], [1, 2, 3, 2, 4, 6]])
def test_degenerate_rotation_raises(r):
    with pytest.raises(DegenerateRotation):
        rotation_to_matrix(r)


def test_yaw_helpers():
    for theta in np.linspace(-3, 3, 13):
        np.testing.assert_allclose(rotation_to_matrix(yaw_rotation(theta)), axis_angle([0, 0, 1], theta), atol=1e-12)
        assert yaw_of(yaw_rotation(theta)) == pytest.approx(theta)


def test_box_vector_round_trip_and_immutability():
    box = OrientedBox([1, 2, 3], [0.5, 1, 2], yaw_rotation(0.3))
    again = OrientedBox.from_vector(box.to_vector())
    assert again.allclose(box)
    with pytest.raises(ValueError):
        box.center[0] = 5.0


def test_corners_and_surfaces():
    box = OrientedBox([0, 0, 1], [2, 4, 2])
    assert box.volume == pytest.approx(16)
    assert top_surface_height(box) == pytest.approx(2.0)
    assert bottom_surface_height(box) == pytest.approx(0.0)
    assert len({tuple(c) for c in box.corners}) == 8
    tilted = OrientedBox([0, 0, 0], [1, 1, 1], matrix_to_rotation(axis_angle([1, 0, 0], np.pi / 4)))
    assert top_surface_height(tilted) == pytest.approx(np.sqrt(2) / 2)


def test_touching_boxes_do_not_intersect():
    a = OrientedBox([0, 0, 0], [1, 1, 1])
    assert not obb_intersects(a, OrientedBox([1, 0, 0], [1, 1, 1]))
    assert not obb_intersects(a, OrientedBox([0, 0, 1], [1, 1, 1]))
    assert obb_intersects(a, OrientedBox([0.999, 0, 0], [1, 1, 1]))
    assert obb_intersects(a, a)


def test_edge_edge_separation_needs_cross_axes():
    # separated only along a cross-product axis: face axes all overlap
    a = OrientedBox([0, 0, 0], [1, 1, 1], matrix_to_rotation(axis_angle([1, 1, 0], 0.6)))
    b = OrientedBox([1.02, -1.02, 0], [1, 1, 1], matrix_to_rotation(axis_angle([1, -1, 1], 0.9)))
    u = np.random.default_rng(3).uniform(-0.5, 0.5, (200_000, 3))
    inside = contains_points(b, a.center + u * a.size @ a.matrix.T)
    assert obb_intersects(a, b) == bool(inside.any())


def test_intersection_is_symmetric():
    rng = np.random.default_rng(4)
    for _ in range(300):
        a = OrientedBox(rng.uniform(-1, 1, 3), rng.uniform(0.2, 1, 3), rng.normal(size=6))
        b = OrientedBox(rng.uniform(-1, 1, 3), rng.uniform(0.2, 1, 3), rng.normal(size=6))
        assert obb_intersects(a, b) == obb_intersects(b, a)


def test_expand_box():
    box = OrientedBox([1, 1, 1], [1, 2, 3], yaw_rotation(0.4))
    big = expand_box(box, 2.0)
    np.testing.assert_allclose(big.size, [2, 4, 6])
    np.testing.assert_allclose(big.center, box.center)
    for k in (0.0, -1.0):
        with pytest.raises(InvalidScale):
            expand_box(box, k)


def test_containment():
    box = OrientedBox([0, 0, 0], [2, 2, 2], yaw_rotation(np.pi / 4))
    assert contains_point(box, [0, 0, 0.99])
    assert contains_point(box, [1.4, 0, 0])
    assert not contains_point(box, [1.0, 1.0, 0])


def test_hull_and_area():
    pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5], [0.2, 0.8]])
    hull = convex_hull_2d(pts)
    assert len(hull) == 4
    assert polygon_area(hull) == pytest.approx(1.0)
    tri = clip_convex(hull, np.array([[0, 0], [2, 0], [0, 2]]))
    assert polygon_area(tri) == pytest.approx(1.0)


def _grid_overlap(a, b, n=400):
    # grid integration oracle for footprint intersection area
    lo = np.minimum(footprint(a).min(0), footprint(b).min(0))
    hi = np.maximum(footprint(a).max(0), footprint(b).max(0))
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    gx, gy = np.meshgrid(xs, ys)
    cell = (xs[1] - xs[0]) * (ys[1] - ys[0])

    def inside(box):
        p = np.stack([gx.ravel() - box.center[0], gy.ravel() - box.center[1]], 1)
        m = box.matrix[:2, :2]
        local = p @ m
        return np.all(np.abs(local) <= box.size[:2] / 2, axis=1)

    return float((inside(a) & inside(b)).sum() * cell)


def test_footprint_overlap_matches_grid_oracle():
    rng = np.random.default_rng(7)
    for _ in range(10):
        a = OrientedBox([*rng.uniform(-0.5, 0.5, 2), 0], [*rng.uniform(0.5, 1.5, 2), 1], yaw_rotation(rng.uniform(0, np.pi)))
        b = OrientedBox([*rng.uniform(-0.5, 0.5, 2), 3], [*rng.uniform(0.5, 1.5, 2), 1], yaw_rotation(rng.uniform(0, np.pi)))
        assert footprint_overlap_area(a, b) == pytest.approx(_grid_overlap(a, b), abs=0.02)


def test_horizontal_overlap_ratio():
    table = OrientedBox([0, 0, 0.5], [2, 2, 1])
    cup = OrientedBox([0, 0, 1.05], [0.1, 0.1, 0.1])
    half_off = OrientedBox([1, 0, 1.05], [0.4, 0.4, 0.1])
    assert horizontal_overlap_ratio(table, cup) == pytest.approx(1.0)
    assert horizontal_overlap_ratio(table, half_off) == pytest.approx(0.5)
    assert horizontal_overlap_ratio(table, OrientedBox([5, 5, 1], [1, 1, 1])) == 0.0
