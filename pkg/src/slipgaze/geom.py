"""3D vector / rotation / line / plane primitives and the pinhole camera.

Conventions: lengths in millimeters, image coordinates in pixels with the
origin at the top-left corner, +u right, +v down.  Rotations are carried by
scipy's Rotation (unit-quaternion semantics).  Degenerate geometry raises,
it never returns NaN.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import (
    BehindCamera,
    DegenerateRotation,
    ParallelLines,
    ParallelPlanes,
)

EPS_PARALLEL = 1e-8

Vec3 = np.ndarray  # shape (3,), float64


def vec3(x, y=None, z=None) -> Vec3:
    """Coerce to a float64 3-vector."""
    if y is None:
        a = np.asarray(x, dtype=float)
        if a.shape != (3,):
            raise ValueError(f"expected a 3-vector, got shape {a.shape}")
        return a
    return np.array([x, y, z], dtype=float)


def unit(v) -> Vec3:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return v / n


def angle_between(a, b) -> float:
    """Angle between two directions, radians in [0, pi]."""
    c = float(np.dot(unit(a), unit(b)))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def rotation_between(a, b) -> Rotation:
    """Minimal rotation carrying direction a onto direction b.

    Raises DegenerateRotation for antiparallel inputs (axis ambiguous).
    """
    a, b = unit(a), unit(b)
    c = np.cross(a, b)
    s = np.linalg.norm(c)
    d = float(np.dot(a, b))
    if s < 1e-15:
        if d > 0.0:
            return Rotation.identity()
        raise DegenerateRotation("antiparallel directions")
    return Rotation.from_rotvec(c / s * np.arctan2(s, d))


@dataclass(frozen=True)
class Ray3:
    """Half-line from origin along a unit direction."""

    origin: Vec3
    direction: Vec3


@dataclass(frozen=True)
class Line3:
    """Infinite line through `point` along a unit direction."""

    point: Vec3
    direction: Vec3

    def __post_init__(self):
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-12:
            raise ValueError("line direction must be unit length")


@dataclass(frozen=True)
class Plane3:
    """Plane n.x = offset with unit normal; offset is the signed distance
    from the origin, mm."""

    normal: Vec3
    offset: float

    def __post_init__(self):
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-12:
            raise ValueError("plane normal must be unit length")

    @classmethod
    def from_point_normal(cls, point, normal) -> "Plane3":
        n = _canonical_direction(unit(normal))
        return cls(n, float(np.dot(n, point)))

    def signed_distance(self, p) -> float:
        return float(np.dot(self.normal, p) - self.offset)


def _canonical_direction(n: Vec3) -> Vec3:
    """Sign-normalize: first component with magnitude > 1e-12 made positive,
    so planes/lines built from oppositely scaled inputs compare equal."""
    for c in n:
        if abs(c) > 1e-12:
            return n if c > 0 else -n
    return n


@dataclass(frozen=True)
class PinholeCamera:
    """Pinhole camera; pose stored as world->camera (rotation, translation):
    x_cam = rot.apply(x_world) + t."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rot: Rotation
    t: Vec3

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValueError("principal point outside the sensor")

    @property
    def center(self) -> Vec3:
        """Camera center in world coordinates."""
        return -self.rot.inv().apply(self.t)

    @property
    def intrinsics(self) -> tuple[float, float, float, float]:
        return (self.fx, self.fy, self.cx, self.cy)


def project(cam: PinholeCamera, p_world) -> np.ndarray:
    """Perspective projection to a pixel (u, v).

    Raises BehindCamera when the camera-frame depth is <= 0.
    """
    pc = cam.rot.apply(np.asarray(p_world, dtype=float)) + cam.t
    z = pc[2]
    if z <= 0.0:
        raise BehindCamera(f"depth {z:.6g} <= 0")
    return np.array([cam.fx * pc[0] / z + cam.cx, cam.fy * pc[1] / z + cam.cy])


def backproject(cam: PinholeCamera, pixel) -> Ray3:
    """Ray from the camera center through the pixel (unit world direction)."""
    u, v = float(pixel[0]), float(pixel[1])
    d_cam = np.array([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0])
    d_world = cam.rot.inv().apply(d_cam)
    return Ray3(cam.center, unit(d_world))


def project_direction(fx, fy, cx, cy, v) -> np.ndarray:
    """Project a camera-frame direction through intrinsics only.

    Raises BehindCamera on non-positive z.
    """
    v = np.asarray(v, dtype=float)
    if v[2] <= 0.0:
        raise BehindCamera(f"direction z {v[2]:.6g} <= 0")
    return np.array([fx * v[0] / v[2] + cx, fy * v[1] / v[2] + cy])


def intersect_planes(a: Plane3, b: Plane3) -> Line3:
    """Intersection line of two planes; direction parallel to n1 x n2.

    Raises ParallelPlanes when |n1 x n2| < 1e-8.
    """
    cr = np.cross(a.normal, b.normal)
    n = np.linalg.norm(cr)
    if n < EPS_PARALLEL:
        raise ParallelPlanes(f"|n1 x n2| = {n:.3g}")
    d = cr / n
    # point with zero component along the line direction
    A = np.vstack([a.normal, b.normal, d])
    rhs = np.array([a.offset, b.offset, 0.0])
    point = np.linalg.solve(A, rhs)
    return Line3(point, _canonical_direction(d))


def point_line_distance(p, line: Line3) -> float:
    """Euclidean distance from a point to an infinite line, mm."""
    w = np.asarray(p, dtype=float) - line.point
    return float(np.linalg.norm(np.cross(w, line.direction)))


def closest_point_on_ray_to_line(ray: Ray3, line: Line3) -> tuple[Vec3, float]:
    """The ray point nearest to the line, and the gap between them (mm).

    Raises ParallelLines when the directions are parallel.
    """
    d1, d2 = unit(ray.direction), line.direction
    c = float(np.dot(d1, d2))
    denom = 1.0 - c * c
    if denom < EPS_PARALLEL**2:
        raise ParallelLines("ray parallel to line")
    w = line.point - ray.origin
    # minimize |origin + s*d1 - (point + u*d2)| over (s, u)
    s = (np.dot(w, d1) - c * np.dot(w, d2)) / denom
    u = (c * np.dot(w, d1) - np.dot(w, d2)) / denom
    p_ray = ray.origin + s * d1
    p_line = line.point + u * d2
    return p_ray, float(np.linalg.norm(p_ray - p_line))


def look_at_camera(
    center, target, fx, fy, cx, cy, width, height, up=(0.0, 1.0, 0.0)
) -> PinholeCamera:
    """Camera at `center` with +z toward `target`; +y as close to `up` as
    the orthogonality constraint allows."""
    z = unit(np.asarray(target, dtype=float) - np.asarray(center, dtype=float))
    x = unit(np.cross(np.asarray(up, dtype=float), z))
    y = np.cross(z, x)
    rot = Rotation.from_matrix(np.vstack([x, y, z]))
    t = -rot.apply(np.asarray(center, dtype=float))
    return PinholeCamera(fx, fy, cx, cy, width, height, rot, t)
