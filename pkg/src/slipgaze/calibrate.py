"""Per-subject calibration from the 9-marker recording: rotation center
E_calib from the axis bundle, the distance-model coefficients (k1, k2) by
linear regression of L against tan^2 theta, and the kappa rotation by
nonlinear least squares against the marker directions.

The device-to-virtual-camera rotation R is taken from rig geometry, not
fitted: calibration data only constrains the product R * R_kappa, so the
factors are not separately identifiable from it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

from .errors import (
    CalibrationError,
    DegenerateAxes,
    DegenerateFeatures,
    InsufficientSpread,
    NoConvergence,
    TooFewGlints,
)
from .estimate import batch_center, optical_axis_frame

MIN_USABLE_FRAMES = 6
MIN_TAN2_SPREAD = 0.01


class KFit(NamedTuple):
    k1: float
    k2: float
    rms_mm: float


@dataclass(frozen=True)
class EyeCalibration:
    """One eye's calibrated quantities, device frame, mm."""

    e_calib: np.ndarray
    k1: float
    k2: float
    r_kappa: Rotation
    diagnostics: dict

    def __post_init__(self):
        if not self.k1 > 0.0:
            raise ValueError(f"k1 must be positive, got {self.k1}")
        for key, val in self.diagnostics.items():
            if not math.isfinite(val):
                raise ValueError(f"diagnostic {key} not finite: {val}")


@dataclass(frozen=True)
class CalibrationProfile:
    """Everything gaze estimation needs for one subject.

    `r` maps device-frame directions into the display's virtual-camera
    frame; `k_virtual` is (fx, fy, cx, cy) of that camera; `d_e` the
    virtual viewing distance in mm.
    """

    schema_version: int
    eyes: dict
    r: Rotation
    k_virtual: tuple
    d_e: float

    def eye(self, name: str) -> EyeCalibration:
        return self.eyes[name]


def fit_k(samples) -> KFit:
    """Ordinary least-squares line L = k1 + k2 * tan^2(theta).

    `samples` is a sequence of (theta_rad, L_mm).  Returns the residual RMS
    alongside the coefficients.
    """
    samples = list(samples)
    if len(samples) < 3:
        raise InsufficientSpread(f"need >= 3 samples, got {len(samples)}")
    theta = np.array([s[0] for s in samples], dtype=float)
    ell = np.array([s[1] for s in samples], dtype=float)
    x = np.tan(theta) ** 2
    if np.ptp(x) < MIN_TAN2_SPREAD:
        raise InsufficientSpread(
            f"tan^2(theta) range {np.ptp(x):.4f} < {MIN_TAN2_SPREAD}; "
            "k2 unidentifiable"
        )
    design = np.stack([np.ones_like(x), x], axis=1)
    coef, _, _, _ = np.linalg.lstsq(design, ell, rcond=None)
    res = ell - design @ coef
    return KFit(float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res**2))))


def _pixel_directions(targets_px, k_virtual) -> np.ndarray:
    fx, fy, cx, cy = k_virtual
    t = np.asarray(targets_px, dtype=float)
    d = np.stack(
        [(t[:, 0] - cx) / fx, (t[:, 1] - cy) / fy, np.ones(len(t))], axis=1
    )
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def fit_kappa(oa_dirs, targets_px, r: Rotation, k_virtual) -> Rotation:
    """Rotation carrying optical-axis directions onto the marker directions.

    Minimizes the summed squared chordal error between the unit direction
    R * R_kappa * oa_i (virtual-camera frame) and the backprojection of
    target_i; chord length tracks angle closely over the small residuals
    involved.  Levenberg-Marquardt over a rotation-vector chart,
    initialized at identity.
    """
    dirs = np.asarray(oa_dirs, dtype=float)
    if dirs.ndim != 2 or dirs.shape[0] < 3:
        raise DegenerateAxes("need >= 3 axis directions")
    s = np.linalg.svd(dirs, compute_uv=False)
    if s[2] < 1e-8 * s[0]:
        raise DegenerateAxes("axis directions coplanar; rotation unidentifiable")
    t_dirs = _pixel_directions(targets_px, k_virtual)

    def residual(rotvec):
        pred = r.apply(Rotation.from_rotvec(rotvec).apply(dirs))
        pred /= np.linalg.norm(pred, axis=1, keepdims=True)
        return (pred - t_dirs).ravel()

    result = least_squares(
        residual,
        np.zeros(3),
        method="lm",
        xtol=1e-10,
        ftol=1e-10,
        gtol=1e-10,
        max_nfev=200,
    )
    if not result.success:
        raise NoConvergence(f"kappa fit did not converge: {result.message}")
    return Rotation.from_rotvec(result.x)


def _angular_rms_deg(r: Rotation, r_kappa: Rotation, dirs, t_dirs) -> float:
    pred = r.apply(r_kappa.apply(dirs))
    pred /= np.linalg.norm(pred, axis=1, keepdims=True)
    dots = np.clip(np.sum(pred * t_dirs, axis=1), -1.0, 1.0)
    return float(np.degrees(np.sqrt(np.mean(np.arccos(dots) ** 2))))


def _shared_display(rig):
    left, right = rig.left.display, rig.right.display
    rel = (left.virtual_cam.rot * right.virtual_cam.rot.inv()).magnitude()
    same_k = (
        left.virtual_cam.fx == right.virtual_cam.fx
        and left.virtual_cam.fy == right.virtual_cam.fy
        and left.virtual_cam.cx == right.virtual_cam.cx
        and left.virtual_cam.cy == right.virtual_cam.cy
        and left.d_e == right.d_e
    )
    if rel > 1e-9 or not same_k:
        raise CalibrationError(
            "per-side display orientations/intrinsics differ; "
            "shared-profile schema requires matching displays"
        )
    vc = left.virtual_cam
    return vc.rot, (vc.fx, vc.fy, vc.cx, vc.cy), left.d_e


def calibrate_session(
    frames,
    rig,
    mode: str = "least_squares",
    r_override: Rotation | None = None,
) -> CalibrationProfile:
    """Calibrate both eyes from the 9-marker recording.

    Per eye, in order: axis observations for every usable frame, E_calib
    from the axis bundle, L_i = |E_calib - G''_i| into the (k1, k2) fit,
    R from the rig, then the kappa fit against the marker pixels.  Frames
    with degenerate or incomplete features are skipped; fewer than 6 usable
    frames for an eye fails the calibration.

    `r_override` substitutes a different device-to-display rotation for R;
    it exists to probe the R / R_kappa identifiability trade, not for
    production use.
    """
    frames = list(frames)
    r_shared, k_virtual, d_e = _shared_display(rig)
    if r_override is not None:
        r_shared = r_override
    eyes = {}
    for eye in ("left", "right"):
        obs, targets, skipped = [], [], []
        for frame in frames:
            try:
                obs.append(optical_axis_frame(frame, eye, rig))
            except (DegenerateFeatures, TooFewGlints):
                skipped.append(frame.frame_id)
                continue
            targets.append(frame.marker_px)
        if len(obs) < MIN_USABLE_FRAMES:
            raise CalibrationError(
                f"{eye} eye: {len(obs)} usable frames < {MIN_USABLE_FRAMES} "
                f"(skipped frame_ids {skipped})"
            )
        axes = [o.axis for o in obs]
        e_calib = batch_center(axes, mode=mode)
        ell = [float(np.linalg.norm(e_calib - o.g2)) for o in obs]
        kfit = fit_k([(o.theta_rad, L) for o, L in zip(obs, ell)])
        dirs = np.stack([o.axis.direction for o in obs])
        r_kappa = fit_kappa(dirs, targets, r_shared, k_virtual)
        t_dirs = _pixel_directions(targets, k_virtual)
        diag = {
            "frames_used": float(len(obs)),
            "frames_skipped": float(len(skipped)),
            "axis_to_center_rms_mm": float(
                np.sqrt(
                    np.mean(
                        [
                            np.linalg.norm(
                                np.cross(e_calib - a.point, a.direction)
                            )
                            ** 2
                            for a in axes
                        ]
                    )
                )
            ),
            "k_fit_rms_mm": kfit.rms_mm,
            "kappa_fit_rms_deg": _angular_rms_deg(r_shared, r_kappa, dirs, t_dirs),
            "median_plane_condition": float(
                np.median([o.condition for o in obs])
            ),
        }
        eyes[eye] = EyeCalibration(
            e_calib=e_calib,
            k1=kfit.k1,
            k2=kfit.k2,
            r_kappa=r_kappa,
            diagnostics=diag,
        )
    return CalibrationProfile(
        schema_version=1, eyes=eyes, r=r_shared, k_virtual=k_virtual, d_e=d_e
    )


def calibrate_dataset(dataset, mode: str = "least_squares") -> CalibrationProfile:
    """Calibrate from a dataset's recording 0 (the calibration protocol)."""
    if 0 not in dataset.recording_ids():
        raise CalibrationError("dataset has no recording 0 (calibration data)")
    return calibrate_session(dataset.recording(0), dataset.rig, mode=mode)
