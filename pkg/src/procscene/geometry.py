"""Oriented bounding box algebra.

Conventions: +z is up, gravity acts along -z. Box sizes are full extents in
meters. Rotations use the continuous 6D encoding (the first two columns of
the rotation matrix, orthonormalized with Gram-Schmidt).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateRotation, InvalidScale

TOUCH_TOL = 1e-9
_PARALLEL_TOL = 1e-9

IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])

# corner sign pattern, shared by corners() and the mesh exporter
CORNER_SIGNS = np.array(
    [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float
)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def rotation_to_matrix(r) -> np.ndarray:
    """Gram-Schmidt the 6D encoding ``(a1, a2)`` into a proper rotation matrix.

    Raises:
        DegenerateRotation: if either vector is zero or the pair is parallel.
    """
    r = np.asarray(r, dtype=float).reshape(6)
    a1, a2 = r[:3], r[3:]
    n1 = np.linalg.norm(a1)
    if not np.isfinite(n1) or n1 < 1e-12:
        raise DegenerateRotation(f"first rotation vector is zero: {a1}")
    b1 = a1 / n1
    u2 = a2 - np.dot(b1, a2) * b1
    n2 = np.linalg.norm(u2)
    if not np.isfinite(n2) or n2 < 1e-12 or n2 < _PARALLEL_TOL * max(np.linalg.norm(a2), 1.0):
        raise DegenerateRotation(f"rotation vectors are parallel or zero: {a1}, {a2}")
    b2 = u2 / n2
    b3 = np.cross(b1, b2)
    return np.column_stack([b1, b2, b3])


def matrix_to_rotation(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return np.concatenate([m[:, 0], m[:, 1]])


def yaw_rotation(theta: float) -> np.ndarray:
    """6D encoding of a rotation by ``theta`` radians about +z."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([c, s, 0.0, -s, c, 0.0])


def yaw_of(rotation) -> float:
    m = rotation_to_matrix(rotation)
    return float(np.arctan2(m[1, 0], m[0, 0]))


@dataclass(frozen=True, eq=False)
class OrientedBox:
    """Immutable oriented box. The rotation is stored orthonormalized."""

    center: np.ndarray
    size: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: IDENTITY_6D.copy())

    def __post_init__(self):
        center = _frozen(self.center).reshape(3)
        size = _frozen(self.size).reshape(3)
        if not np.all(np.isfinite(center)) or not np.all(np.isfinite(size)):
            raise ValueError("box center and size must be finite")
        if np.any(size <= 0):
            raise ValueError(f"box size must be strictly positive, got {size}")
        rot = _frozen(matrix_to_rotation(rotation_to_matrix(self.rotation)))
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "rotation", rot)

    @cached_property
    def matrix(self) -> np.ndarray:
        m = rotation_to_matrix(self.rotation)
        m.setflags(write=False)
        return m

    @property
    def half_extents(self) -> np.ndarray:
        return self.size / 2.0

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    @cached_property
    def corners(self) -> np.ndarray:
        c = self.center + (CORNER_SIGNS * self.half_extents) @ self.matrix.T
        c.setflags(write=False)
        return c

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.center, self.size, self.rotation])

    @classmethod
    def from_vector(cls, v) -> "OrientedBox":
        v = np.asarray(v, dtype=float).reshape(12)
        return cls(v[:3], v[3:6], v[6:])

    def translated(self, offset) -> "OrientedBox":
        return OrientedBox(self.center + np.asarray(offset, dtype=float), self.size, self.rotation)

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        ext = np.abs(self.matrix) @ self.half_extents
        return self.center - ext, self.center + ext

    def allclose(self, other: "OrientedBox", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.to_vector(), other.to_vector(), rtol=0.0, atol=atol))

    def __repr__(self) -> str:
        c = np.array2string(self.center, precision=4)
        s = np.array2string(self.size, precision=4)
        return f"OrientedBox(center={c}, size={s}, yaw={np.degrees(yaw_of(self.rotation)):.1f}deg)"


def obb_intersects(a: OrientedBox, b: OrientedBox, tol: float = TOUCH_TOL) -> bool:
    """Separating-axis test over the 15 candidate axes.

    Boxes whose projections overlap by no more than ``tol`` on some axis are
    separated, so touching faces do not count as an intersection.
    """
    ra, rb = a.matrix, b.matrix
    cross = np.cross(ra.T[:, None, :], rb.T[None, :, :]).reshape(9, 3)
    norms = np.linalg.norm(cross, axis=1)
    cross = cross[norms > _PARALLEL_TOL] / norms[norms > _PARALLEL_TOL, None]
    axes = np.vstack([ra.T, rb.T, cross])
    radius_a = np.abs(axes @ ra) @ a.half_extents
    radius_b = np.abs(axes @ rb) @ b.half_extents
    dist = np.abs(axes @ (b.center - a.center))
    return bool(np.all(dist < radius_a + radius_b - tol))


def expand_box(b: OrientedBox, k: float) -> OrientedBox:
    """Scale all three extents by ``k`` about the unchanged center."""
    if not k > 0:
        raise InvalidScale(f"expansion factor must be positive, got {k}")
    return OrientedBox(b.center, b.size * k, b.rotation)


def top_surface_height(b: OrientedBox) -> float:
    return float(b.center[2] + np.abs(b.matrix[2]) @ b.half_extents)


def bottom_surface_height(b: OrientedBox) -> float:
    return float(b.center[2] - np.abs(b.matrix[2]) @ b.half_extents)


def contains_point(b: OrientedBox, p, tol: float = TOUCH_TOL) -> bool:
    local = b.matrix.T @ (np.asarray(p, dtype=float) - b.center)
    return bool(np.all(np.abs(local) <= b.half_extents + tol))


def contains_points(b: OrientedBox, pts, tol: float = TOUCH_TOL) -> np.ndarray:
    """Vectorized :func:`contains_point` over an ``(N, 3)`` array."""
    local = (np.asarray(pts, dtype=float) - b.center) @ b.matrix
    return np.all(np.abs(local) <= b.half_extents + tol, axis=-1)


# ---------------------------------------------------------------------------
# ground-plane footprints


def _cross2(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points) -> np.ndarray:
    """Andrew's monotone chain; returns CCW vertices without repetition."""
    pts = sorted(set(map(tuple, np.round(np.asarray(points, dtype=float), 15))))
    if len(pts) <= 2:
        return np.array(pts, dtype=float)
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross2(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross2(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def polygon_area(poly) -> float:
    poly = np.asarray(poly, dtype=float)
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def clip_convex(subject, clip) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon by a CCW convex polygon."""
    out = [tuple(p) for p in np.asarray(subject, dtype=float)]
    clip = np.asarray(clip, dtype=float)
    n = len(clip)
    for i in range(n):
        if not out:
            break
        a, b = clip[i], clip[(i + 1) % n]
        inp, out = out, []
        for j in range(len(inp)):
            p, q = inp[j], inp[(j + 1) % len(inp)]
            p_in = _cross2(a, b, p) >= 0
            q_in = _cross2(a, b, q) >= 0
            if p_in:
                out.append(p)
            if p_in != q_in:
                dp = _cross2(a, b, p)
                dq = _cross2(a, b, q)
                t = dp / (dp - dq)
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return np.array(out, dtype=float).reshape(-1, 2)


def footprint(b: OrientedBox) -> np.ndarray:
    """Convex hull of the corners projected onto the ground plane."""
    return convex_hull_2d(b.corners[:, :2])


def footprint_overlap_area(a: OrientedBox, b: OrientedBox) -> float:
    fa, fb = footprint(a), footprint(b)
    if len(fa) < 3 or len(fb) < 3:
        return 0.0
    return polygon_area(clip_convex(fb, fa))


def horizontal_overlap_ratio(lower: OrientedBox, upper: OrientedBox) -> float:
    """Footprint intersection area divided by the footprint area of ``upper``."""
    upper_area = polygon_area(footprint(upper))
    if upper_area <= 0.0:
        return 0.0
    ratio = footprint_overlap_area(lower, upper) / upper_area
    return float(min(1.0, max(0.0, ratio)))
