"""Aspheric eye model and forward optics.

The cornea is the ellipsoid x^2 + y^2 + p z^2 = r^2 (p = Q + 1) in an
eye-local frame whose origin sits at the ellipsoid center C and whose +z is
the optical axis pointing out of the eye.  The rotation center E lies at
(0, 0, -t), the pupil center at (0, 0, +d_pupil), and the corneal apex at
(0, 0, r/sqrt(p)).  Only the anterior cap (local z > 0) is optically active.

All public operations take world-frame inputs; EyePose carries the rigid
placement (E position + orientation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.spatial.transform import Rotation

from .errors import (
    DegenerateTarget,
    NoConvergence,
    NoSolution,
    NoVisibleReflection,
    OffSurface,
    TotalInternalReflection,
)
from .geom import Line3, PinholeCamera, Vec3, project, rotation_between, unit

_DEFAULT_R = 7.8
_DEFAULT_Q = -0.3
_DEFAULT_APEX = _DEFAULT_R / math.sqrt(_DEFAULT_Q + 1.0)
# apex-to-E approx 13.5 mm and apex-to-pupil approx 3.6 mm at the default shape
_DEFAULT_T = 13.5 - _DEFAULT_APEX

_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class EyeParams:
    """Per-eye physiology.

    r: cornea ellipsoid equatorial radius, mm.
    q: asphericity (Q = 0 is a sphere; human mean about -0.3).
    t: distance from the ellipsoid center C to the rotation center E, mm.
    d_pupil: distance from C to the pupil-center plane (apex side), mm.
    n_refr: effective corneal refractive index.
    kappa_h_deg / kappa_v_deg: visual-axis offset, degrees; kappa_h > 0
    rotates the visual axis toward local +x.
    """

    r: float = _DEFAULT_R
    q: float = _DEFAULT_Q
    t: float = _DEFAULT_T
    d_pupil: float = 5.7
    n_refr: float = 1.3375
    kappa_h_deg: float = 0.0
    kappa_v_deg: float = 0.0

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be positive")
        if not self.q + 1.0 > 0:
            raise ValueError("Q + 1 must be positive")
        # == 1 is the no-refraction limit, useful as a test oracle
        if not self.n_refr >= 1.0:
            raise ValueError("n_refr must be at least 1")
        if not self.t > 0:
            raise ValueError("t must be positive")
        # the pupil must lie strictly inside the anterior cap
        if not 0.0 < self.d_pupil < self.apex_height:
            raise ValueError("d_pupil must lie in (0, r/sqrt(p))")

    @property
    def p(self) -> float:
        return self.q + 1.0

    @property
    def apex_height(self) -> float:
        """Local z of the corneal apex, r/sqrt(p)."""
        return self.r / math.sqrt(self.q + 1.0)

    @property
    def kappa_rotation(self) -> Rotation:
        """Rotation taking the optical-axis direction to the visual-axis
        direction in the eye-local frame."""
        return Rotation.from_euler(
            "yx", [math.radians(self.kappa_h_deg), math.radians(self.kappa_v_deg)]
        )

    @property
    def kappa_angle_deg(self) -> float:
        """Composed kappa: the angle between the two axes."""
        khat = self.kappa_rotation.apply(_Z)
        return math.degrees(math.acos(min(1.0, max(-1.0, float(khat[2])))))


@dataclass(frozen=True)
class EyePose:
    """Rigid placement: E position (world, mm) + eye-local -> world rotation."""

    rotation_center: Vec3
    orientation: Rotation

    @property
    def optical_dir(self) -> Vec3:
        return self.orientation.apply(_Z)


@dataclass(frozen=True)
class SurfacePoint:
    """A point on the cornea with its outward unit normal (world frame)."""

    position: Vec3
    normal: Vec3


def cornea_center(params: EyeParams, pose: EyePose) -> Vec3:
    """World position of the ellipsoid center C = E + t * optical_dir."""
    return pose.rotation_center + params.t * pose.optical_dir


def to_local(params: EyeParams, pose: EyePose, p_world) -> Vec3:
    """World -> eye-local (origin C, +z optical axis)."""
    return pose.orientation.inv().apply(
        np.asarray(p_world, dtype=float) - cornea_center(params, pose)
    )


def to_world(params: EyeParams, pose: EyePose, p_local) -> Vec3:
    return cornea_center(params, pose) + pose.orientation.apply(
        np.asarray(p_local, dtype=float)
    )


def surface_residual(params: EyeParams, pose: EyePose, p_world) -> float:
    """x^2 + y^2 + p z^2 - r^2 in eye-local coordinates; 0 on the surface,
    positive outside, negative inside."""
    x, y, z = to_local(params, pose, p_world)
    return float(x * x + y * y + params.p * z * z - params.r**2)


def surface_normal(params: EyeParams, pose: EyePose, p_on_surface) -> Vec3:
    """Outward unit normal at a surface point (residual must be < 1e-6)."""
    res = surface_residual(params, pose, p_on_surface)
    if abs(res) >= 1e-6:
        raise OffSurface(f"surface residual {res:.3g}")
    x, y, z = to_local(params, pose, p_on_surface)
    n_local = unit(np.array([x, y, params.p * z]))
    return pose.orientation.apply(n_local)


def optical_axis(params: EyeParams, pose: EyePose) -> Line3:
    """Line through E and C along the eye's +z."""
    return Line3(pose.rotation_center.copy(), pose.optical_dir)


def visual_axis(params: EyeParams, pose: EyePose) -> Line3:
    """Line of sight: through C, the optical axis rotated by kappa."""
    d = pose.orientation.apply(params.kappa_rotation.apply(_Z))
    return Line3(cornea_center(params, pose), unit(d))


def pose_fixating(params: EyeParams, rotation_center, target) -> EyePose:
    """The pose of an eye at `rotation_center` fixating `target`.

    The visual axis (from C) passes through the target exactly.  Orientation
    is the minimal rotation carrying the resting line-of-sight direction
    u = unit(t*z + lambda*kappa_hat) onto the target direction, i.e. the
    pose has no twist about the line of sight.
    """
    E = np.asarray(rotation_center, dtype=float)
    T = np.asarray(target, dtype=float)
    D = float(np.linalg.norm(T - E))
    if D <= params.t:
        raise DegenerateTarget(f"target distance {D:.3g} mm inside the eye")
    khat = params.kappa_rotation.apply(_Z)
    kz = float(khat[2])
    # |t*z + lambda*khat| = D  ->  lambda^2 + 2 t kz lambda + t^2 - D^2 = 0
    disc = params.t**2 * (kz * kz - 1.0) + D * D
    lam = -params.t * kz + math.sqrt(disc)
    u = unit(params.t * _Z + lam * khat)
    v = unit(T - E)
    return EyePose(E, rotation_between(u, v))


# ---------------------------------------------------------------------------
# glints (specular reflection)
# ---------------------------------------------------------------------------


def _fermat_batch(
    params: EyeParams,
    leds_local: np.ndarray,
    cam_local: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> np.ndarray:
    """Minimize |led - S| + |S - cam| over the anterior cap for a batch of
    LEDs, all in eye-local coordinates.  Chart: S(a, b) =
    (r a, r b, apex*sqrt(1 - a^2 - b^2)).  Returns chart points (n, 2).
    """
    n = leds_local.shape[0]
    r, apx = params.r, params.apex_height
    ab = np.zeros((n, 2))  # start at the apex

    def path_grad(ab):
        a, b = ab[:, 0], ab[:, 1]
        w2 = 1.0 - a * a - b * b
        off = w2 <= 1e-9
        w = np.sqrt(np.clip(w2, 1e-12, None))
        S = np.stack([r * a, r * b, apx * w], axis=1)
        Ja = np.stack([np.full(n, r), np.zeros(n), -apx * a / w], axis=1)
        Jb = np.stack([np.zeros(n), np.full(n, r), -apx * b / w], axis=1)
        d1 = S - leds_local
        l1 = np.linalg.norm(d1, axis=1)
        d2 = S - cam_local[None, :]
        l2 = np.linalg.norm(d2, axis=1)
        s = d1 / l1[:, None] + d2 / l2[:, None]
        g = np.stack([np.sum(Ja * s, axis=1), np.sum(Jb * s, axis=1)], axis=1)
        return l1 + l2, g, off

    f, g, off = path_grad(ab)
    if off.any():
        raise NoVisibleReflection("chart left the anterior cap")
    h = 1e-7
    for _ in range(max_iter):
        gn = np.linalg.norm(g, axis=1)
        active = gn > tol
        if not active.any():
            return ab
        # finite-difference Hessian of the path length from the analytic grad
        H = np.empty((n, 2, 2))
        for j in range(2):
            abp = ab.copy()
            abp[:, j] += h
            _, gp, _ = path_grad(abp)
            H[:, :, j] = (gp - g) / h
        H = 0.5 * (H + np.transpose(H, (0, 2, 1)))
        det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] * H[:, 1, 0]
        step = np.empty_like(ab)
        ok = (np.abs(det) > 1e-14) & (H[:, 0, 0] > 0)
        step[:, 0] = -(H[:, 1, 1] * g[:, 0] - H[:, 0, 1] * g[:, 1])
        step[:, 1] = -(-H[:, 1, 0] * g[:, 0] + H[:, 0, 0] * g[:, 1])
        step[ok] /= det[ok, None]
        step[~ok] = -g[~ok] * 0.05  # fall back to scaled descent
        step[~active] = 0.0
        alpha = np.ones(n)
        for _ in range(40):
            cand = ab + alpha[:, None] * step
            inside = np.sum(cand * cand, axis=1) < 0.9999
            f_new = np.full(n, np.inf)
            if inside.any():
                fi, _, offi = path_grad(cand)
                f_new = np.where(inside & ~offi, fi, np.inf)
            worse = active & (f_new > f + 1e-13)
            if not worse.any():
                break
            alpha[worse] *= 0.5
        ab = ab + (alpha * active)[:, None] * step
        f, g, off = path_grad(ab)
    gn = np.linalg.norm(g, axis=1)
    if (gn > tol).any():
        near_edge = np.sum(ab * ab, axis=1) > 0.98
        if near_edge.any():
            raise NoVisibleReflection("solver left the anterior cap")
        raise NoConvergence(f"glint gradient {gn.max():.3g} after {max_iter} iters")
    return ab


def _chart_to_surface(params: EyeParams, ab: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Chart points (n, 2) -> local surface positions and outward normals."""
    a, b = ab[:, 0], ab[:, 1]
    w = np.sqrt(np.clip(1.0 - a * a - b * b, 0.0, None))
    S = np.stack([params.r * a, params.r * b, params.apex_height * w], axis=1)
    nrm = np.stack([S[:, 0], S[:, 1], params.p * S[:, 2]], axis=1)
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]
    return S, nrm


def glint_points(
    params: EyeParams, pose: EyePose, leds, cam_center
) -> list[SurfacePoint]:
    """Specular reflection points for a batch of LED positions sharing one
    camera (world frame).  See glint_point for the contract."""
    leds = np.atleast_2d(np.asarray(leds, dtype=float))
    for led in leds:
        if surface_residual(params, pose, led) <= 0:
            raise ValueError("led must be outside the cornea")
    if surface_residual(params, pose, cam_center) <= 0:
        raise ValueError("cam_center must be outside the cornea")
    leds_local = np.stack([to_local(params, pose, led) for led in leds])
    cam_local = to_local(params, pose, cam_center)
    ab = _fermat_batch(params, leds_local, cam_local)
    S, nrm = _chart_to_surface(params, ab)
    out = []
    for i in range(len(leds)):
        if S[i, 2] <= 0:
            raise NoVisibleReflection("reflection point behind the corneal cap")
        out.append(
            SurfacePoint(
                to_world(params, pose, S[i]), pose.orientation.apply(nrm[i])
            )
        )
    return out


def glint_point(params: EyeParams, pose: EyePose, led, cam_center) -> SurfacePoint:
    """The corneal reflection of one LED seen by a camera.

    Found by minimizing the Fermat path |led - S| + |S - cam_center| over the
    anterior cap (damped Newton on a 2-parameter chart, gradient tolerance
    1e-10, max 100 iterations); at the minimum the reflection law holds.
    Raises NoVisibleReflection when the solution leaves the cap.
    """
    return glint_points(params, pose, np.asarray(led, dtype=float)[None, :], cam_center)[0]


def camera_coincident_glint(params: EyeParams, pose: EyePose, cam_center) -> SurfacePoint:
    """The glint an LED at the camera center would produce: the surface point
    whose outward normal line passes through the camera.

    Solved independently of the Fermat route: the point lies in the meridian
    plane of the camera, reducing to a 1-D bracketed root in the polar
    parameter.  Raises NoSolution when the normal line cannot reach the
    camera (camera behind the cap or on the axis below the apex).
    """
    if surface_residual(params, pose, cam_center) <= 0:
        raise ValueError("cam_center must be outside the cornea")
    K = to_local(params, pose, cam_center)
    xi_k = math.hypot(K[0], K[1])
    apx = params.apex_height
    sqp = math.sqrt(params.p)
    if xi_k < 1e-12:
        if K[2] <= apx:
            raise NoSolution("camera on the optical axis behind the apex")
        apex_local = np.array([0.0, 0.0, apx])
        return SurfacePoint(
            to_world(params, pose, apex_local), pose.orientation.apply(_Z)
        )
    e_xi = np.array([K[0] / xi_k, K[1] / xi_k, 0.0])

    def g(w):
        # cross of (K - S) with the normal, in the meridian (xi, z) plane
        xi, z = params.r * math.sin(w), apx * math.cos(w)
        n_xi, n_z = math.sin(w), sqp * math.cos(w)
        return (xi_k - xi) * n_z - (K[2] - z) * n_xi

    lo, hi = 1e-12, math.pi / 2 - 1e-12
    if g(lo) * g(hi) > 0:
        raise NoSolution("no meridional normal through the camera")
    w = brentq(g, lo, hi, xtol=1e-14, maxiter=200)
    S = params.r * math.sin(w) * e_xi + np.array([0.0, 0.0, apx * math.cos(w)])
    n_local = unit(math.sin(w) * e_xi + np.array([0.0, 0.0, sqp * math.cos(w)]))
    if float(np.dot(K - S, n_local)) <= 0:
        raise NoSolution("camera on the inward side of the normal")
    return SurfacePoint(to_world(params, pose, S), pose.orientation.apply(n_local))


# ---------------------------------------------------------------------------
# virtual pupil (refraction)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PupilTrace:
    """Chief-ray solution for the refracted pupil image."""

    pixel: np.ndarray
    surface_point: SurfacePoint
    dir_inside: Vec3  # unit, pupil -> surface (world)
    dir_outside: Vec3  # unit, surface -> camera (world)

    def snell_residual(self, n_refr: float) -> float:
        """n_in * sin(theta_in) - sin(theta_out); 0 at a valid refraction."""
        n = self.surface_point.normal
        s_in = np.linalg.norm(np.cross(self.dir_inside, n))
        s_out = np.linalg.norm(np.cross(self.dir_outside, n))
        return float(n_refr * s_in - s_out)


def _refract_2d(d, nrm, eta):
    """Snell refraction in the meridian plane; d, nrm unit 2-vectors, the ray
    travels along d from the denser side (index ratio eta = n_in / n_out).
    Returns None on total internal reflection."""
    c1 = d[0] * nrm[0] + d[1] * nrm[1]
    s2 = eta * eta * (1.0 - c1 * c1)
    if s2 >= 1.0:
        return None
    c2 = math.sqrt(1.0 - s2)
    return (eta * d[0] - (eta * c1 - c2) * nrm[0], eta * d[1] - (eta * c1 - c2) * nrm[1])


def virtual_pupil_trace(params: EyeParams, pose: EyePose, cam: PinholeCamera) -> PupilTrace:
    """Solve the chief ray from the pupil center through one corneal
    refraction to the camera center; returns the full ray geometry.

    The pupil center lies on the optical axis, so the problem is meridional:
    1-parameter shooting over the launch angle in the plane spanned by the
    axis and the camera center, bracketed by a coarse scan and polished with
    a hybrid bisection/Newton root finder.
    """
    K = to_local(params, pose, cam.center)
    xi_k = math.hypot(K[0], K[1])
    apx = params.apex_height
    zp = params.d_pupil
    if xi_k < 1e-9:
        apex_world = to_world(params, pose, np.array([0.0, 0.0, apx]))
        axis_w = pose.optical_dir
        return PupilTrace(
            project(cam, apex_world),
            SurfacePoint(apex_world, axis_w),
            axis_w,
            -axis_w if K[2] < apx else axis_w,
        )
    e_xi = np.array([K[0] / xi_k, K[1] / xi_k, 0.0])
    K2 = np.array([xi_k, K[2]])
    eta = params.n_refr  # inside (n_refr) -> outside (1.0)
    p, r2 = params.p, params.r**2

    def shoot(phi):
        """Signed miss of the refracted ray past the camera; None if invalid."""
        d = (math.sin(phi), math.cos(phi))
        aq = d[0] * d[0] + p * d[1] * d[1]
        bq = 2.0 * p * zp * d[1]
        cq = p * zp * zp - r2
        disc = bq * bq - 4.0 * aq * cq
        if disc <= 0.0:
            return None
        s = (-bq + math.sqrt(disc)) / (2.0 * aq)
        if s <= 0.0:
            return None
        S = (s * d[0], zp + s * d[1])
        if S[1] <= 0.0:
            return None  # left the anterior cap
        nn = math.hypot(S[0], p * S[1])
        nrm = (S[0] / nn, p * S[1] / nn)
        t = _refract_2d(d, nrm, eta)
        if t is None:
            return None
        w = (K2[0] - S[0], K2[1] - S[1])
        if w[0] * t[0] + w[1] * t[1] <= 0.0:
            return None  # refracted ray heading away from the camera
        return w[0] * t[1] - w[1] * t[0]

    phis = np.linspace(-0.6, 0.98 * math.pi / 2, 600)
    vals = [shoot(ph) for ph in phis]
    bracket = None
    for i in range(len(phis) - 1):
        a, b = vals[i], vals[i + 1]
        if a is not None and b is not None and a * b <= 0.0:
            bracket = (phis[i], phis[i + 1])
            break
    if bracket is None:
        if any(v is None for v in vals):
            raise TotalInternalReflection("no refracted path to the camera")
        raise NoConvergence("virtual pupil: no bracketing launch angle")
    phi = brentq(shoot, bracket[0], bracket[1], xtol=1e-13, maxiter=200)

    # reconstruct and verify the solution
    d = (math.sin(phi), math.cos(phi))
    aq = d[0] ** 2 + p * d[1] ** 2
    bq = 2.0 * p * zp * d[1]
    cq = p * zp * zp - r2
    s = (-bq + math.sqrt(bq * bq - 4.0 * aq * cq)) / (2.0 * aq)
    S2 = (s * d[0], zp + s * d[1])
    nn = math.hypot(S2[0], p * S2[1])
    nrm2 = (S2[0] / nn, p * S2[1] / nn)
    t2 = _refract_2d(d, nrm2, eta)
    if t2 is None:
        raise TotalInternalReflection("refraction invalid at the solution")
    w = (K2[0] - S2[0], K2[1] - S2[1])
    miss = abs(w[0] * t2[1] - w[1] * t2[0]) / math.hypot(*t2)
    if miss > 1e-7:
        raise NoConvergence(f"virtual pupil: chief ray misses camera by {miss:.3g} mm")

    S_local = S2[0] * e_xi + np.array([0.0, 0.0, S2[1]])
    n_local = nrm2[0] * e_xi + np.array([0.0, 0.0, nrm2[1]])
    d_in_local = d[0] * e_xi + np.array([0.0, 0.0, d[1]])
    d_out_local = unit(t2[0] * e_xi + np.array([0.0, 0.0, t2[1]]))
    S_world = to_world(params, pose, S_local)
    return PupilTrace(
        project(cam, S_world),
        SurfacePoint(S_world, pose.orientation.apply(n_local)),
        pose.orientation.apply(d_in_local),
        pose.orientation.apply(d_out_local),
    )


def virtual_pupil_image(params: EyeParams, pose: EyePose, cam: PinholeCamera) -> np.ndarray:
    """Pixel of the refracted pupil-center image P' seen by `cam`."""
    return virtual_pupil_trace(params, pose, cam).pixel


def pupil_center(params: EyeParams, pose: EyePose) -> Vec3:
    """World position of the geometric pupil center (on the optical axis)."""
    return to_world(params, pose, np.array([0.0, 0.0, params.d_pupil]))
