"""Inverse pipeline, feature pixels to eye geometry: per-camera planes
through the optical axis, stereo axis recovery, the G''/theta construction
on the primary camera, and rotation-center estimators (batch over many
axes, single-frame via the linear distance model L = k1 + k2 tan^2 theta).

Everything here works in the calibration-time device frame of the rig the
caller passes in; slippage in the data shows up as a shifted eye, never as
a shifted camera.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateBundle,
    DegenerateFeatures,
    NotEnoughAxes,
    ThetaOutOfRange,
    TooFewGlints,
)
from .geom import (
    EPS_PARALLEL,
    Line3,
    PinholeCamera,
    Plane3,
    Vec3,
    angle_between,
    backproject,
    closest_point_on_ray_to_line,
    intersect_planes,
)
from .rig import marker_world_position

EPS_FEATURE_PX = 0.5
THETA_MAX_RAD = math.radians(80.0)


@dataclass(frozen=True)
class AxisObservation:
    """One frame's estimate for one eye: the two camera planes, the
    recovered optical-axis line, the surface point G'' on the primary
    camera's glint ray, and the axis/ray angle theta.

    Quality fields: `gap_mm` is the skew distance between the axis and the
    glint ray (zero noise-free), `condition` the plane-pair condition
    number (large when the planes are nearly parallel).  `cam_center` is
    the primary camera's center, kept so the single-frame center estimator
    can check its sign rule.
    """

    planes: tuple[Plane3, Plane3]
    axis: Line3
    g2: Vec3
    theta_rad: float
    gap_mm: float
    condition: float
    cam_center: Vec3


def glint_centroid(glints_px) -> np.ndarray:
    """Arithmetic mean of the valid (non-None) glint pixels."""
    pts = [np.asarray(g, dtype=float) for g in glints_px if g is not None]
    if len(pts) < 3:
        raise TooFewGlints(f"need >= 3 valid glints, got {len(pts)}")
    return np.mean(pts, axis=0)


def camera_plane(pupil_px, glint_centroid_px, cam: PinholeCamera) -> Plane3:
    """Plane through the camera center containing both backprojected rays.

    The optical axis lies (approximately) in this plane: the pupil image
    and the glint centroid are both images of on-axis points.
    """
    pupil_px = np.asarray(pupil_px, dtype=float)
    glint_centroid_px = np.asarray(glint_centroid_px, dtype=float)
    if np.linalg.norm(pupil_px - glint_centroid_px) <= EPS_FEATURE_PX:
        raise DegenerateFeatures(
            "pupil and glint centroid coincide; camera is on the optical axis"
        )
    dp = backproject(cam, pupil_px).direction
    dg = backproject(cam, glint_centroid_px).direction
    n = np.cross(dp, dg)
    norm = np.linalg.norm(n)
    if norm < EPS_PARALLEL:
        raise DegenerateFeatures("backprojected rays nearly collinear")
    return Plane3.from_point_normal(cam.center, n / norm)


def optical_axis_frame(frame, eye: str, rig) -> AxisObservation:
    """Recover the optical axis of `eye` from one frame.

    Intersects the two camera planes, orients the line to point out of the
    eye (positive dot with the camera-to-display direction), and locates
    G'' as the point on the primary camera's glint-centroid ray closest to
    the axis.
    """
    feats = frame.eyes[eye]
    side = rig.side(eye)
    planes = []
    centroids = []
    for cam_feats, cam in zip(feats.cams, side.cameras):
        if cam_feats.pupil_px is None:
            raise DegenerateFeatures("camera unusable: pupil missing")
        c = glint_centroid(cam_feats.glints_px)
        centroids.append(c)
        planes.append(camera_plane(cam_feats.pupil_px, c, cam))
    axis = intersect_planes(planes[0], planes[1])

    cam0 = side.cameras[0]
    disp_center_px = (side.display.virtual_cam.cx, side.display.virtual_cam.cy)
    to_display = marker_world_position(side.display, disp_center_px) - cam0.center
    d = axis.direction
    if float(np.dot(d, to_display)) < 0.0:
        d = -d
        axis = Line3(axis.point, d)

    glint_ray = backproject(cam0, centroids[0])
    g2, gap = closest_point_on_ray_to_line(glint_ray, axis)
    theta = angle_between(d, glint_ray.direction)
    if theta > math.pi / 2.0:
        theta = math.pi - theta
    nmat = np.stack([planes[0].normal, planes[1].normal])
    s = np.linalg.svd(nmat, compute_uv=False)
    condition = float(s[0] / s[1]) if s[1] > 0 else math.inf
    return AxisObservation(
        planes=(planes[0], planes[1]),
        axis=axis,
        g2=g2,
        theta_rad=float(theta),
        gap_mm=float(gap),
        condition=condition,
        cam_center=cam0.center,
    )


def _projectors(axes) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis orthogonal-complement projectors P_i = I - d_i d_i^T and
    anchor points, stacked."""
    dirs = np.stack([a.direction for a in axes])
    pts = np.stack([a.point for a in axes])
    eye3 = np.eye(3)
    projs = eye3[None, :, :] - dirs[:, :, None] * dirs[:, None, :]
    return projs, pts


def _weighted_solve(projs, pts, w) -> np.ndarray:
    a = np.einsum("i,ijk->jk", w, projs)
    b = np.einsum("i,ijk,ik->j", w, projs, pts)
    return np.linalg.solve(a, b)


def batch_center(axes, mode: str = "least_squares") -> np.ndarray:
    """Point closest to a bundle of axis lines.

    mode="least_squares" (default): closed-form minimizer of the sum of
    squared point-to-line distances.  mode="l1": minimizer of the plain sum
    of distances via iteratively reweighted least squares, started at the
    least-squares solution (tolerance 1e-9 mm, at most 100 iterations).
    """
    axes = list(axes)
    if len(axes) < 2:
        raise NotEnoughAxes(f"need >= 2 axes, got {len(axes)}")
    if len(axes) < 5:
        warnings.warn(
            f"batch_center with only {len(axes)} axes; estimate may be weak",
            stacklevel=2,
        )
    dirs = np.stack([a.direction for a in axes])
    s = np.linalg.svd(dirs, compute_uv=False)
    if s[1] < EPS_PARALLEL * s[0]:
        raise DegenerateBundle("all axes parallel; center unobservable")
    projs, pts = _projectors(axes)
    ones = np.ones(len(axes))
    x = _weighted_solve(projs, pts, ones)
    if mode == "least_squares":
        return x
    if mode != "l1":
        raise ValueError(f"unknown mode {mode!r}")
    for _ in range(100):
        res = pts - x[None, :]
        d = np.linalg.norm(np.einsum("ijk,ik->ij", projs, res), axis=1)
        w = 1.0 / np.maximum(d, 1e-12)
        x_new = _weighted_solve(projs, pts, w)
        step = np.linalg.norm(x_new - x)
        x = x_new
        if step < 1e-9:
            break
    return x


def frame_center(obs: AxisObservation, k1: float, k2: float) -> np.ndarray:
    """Single-frame rotation center: walk the calibrated distance
    L = k1 + k2 tan^2 theta from G'' along the axis, into the eye."""
    if k1 <= 0.0:
        raise ValueError("k1 must be positive")
    if obs.theta_rad >= THETA_MAX_RAD:
        raise ThetaOutOfRange(
            f"theta {math.degrees(obs.theta_rad):.1f} deg >= 80 deg"
        )
    length = k1 + k2 * math.tan(obs.theta_rad) ** 2
    u = -obs.axis.direction  # axis points out of the eye; E is inward
    e = obs.g2 + length * u
    if float(np.dot(e - obs.g2, obs.cam_center - obs.g2)) >= 0.0:
        # the center must land on the far side of G'' from the camera; only
        # a grossly mis-signed calibration (L <= 0) can trip this
        raise ThetaOutOfRange("distance model walked toward the camera")
    return e


def axes_for_recording(dataset, eye: str, recording_id: int) -> list:
    """All recoverable AxisObservations for one eye in one recording.
    Frames whose features are degenerate or incomplete are skipped."""
    out = []
    for frame in dataset.recording(recording_id):
        try:
            out.append(optical_axis_frame(frame, eye, dataset.rig))
        except (DegenerateFeatures, TooFewGlints):
            continue
    return out
