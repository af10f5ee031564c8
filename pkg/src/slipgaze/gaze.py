"""Gaze mapping and evaluation: slippage-corrected monocular gaze through
the display's virtual camera, binocular fusion by averaging, the angular
offset metric, and dataset-level evaluation tables.

The monocular map is direction-based: the optical-axis direction is
rotated by the kappa correction, a first-order slippage term
(E_now - E_calib) / d_e is added, and the result is projected through the
virtual-camera intrinsics.  E_now comes from the single-frame distance
model by default (the real-time path) so correction tracks slippage that
can happen at any moment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibrate import CalibrationProfile
from .errors import (
    BehindVirtualCamera,
    DegenerateFeatures,
    MissingEye,
    MissingGroundTruth,
    ThetaOutOfRange,
    TooFewGlints,
)
from .estimate import batch_center, frame_center, optical_axis_frame

EYES = ("left", "right")


@dataclass(frozen=True)
class GazeEstimate:
    """Per-frame gaze output.  Monocular pixels are None when that eye's
    features were unusable; the binocular pixel is present iff both are."""

    frame_id: int
    left_px: np.ndarray | None
    right_px: np.ndarray | None
    bino_px: np.ndarray | None
    correction_applied: bool
    e_now: dict  # eye name -> Vec3 or None

    def mono(self, eye: str):
        return self.left_px if eye == "left" else self.right_px


@dataclass(frozen=True)
class ReportRow:
    """One evaluation row: a (subject, recording) pair, or the subject
    aggregate when recording_id is None.  Offsets in degrees; center errors
    are per-axis statistics of the single-frame center against the
    recording's own batch center, expressed in the primary camera frame and
    pooled over both eyes."""

    subject_id: int
    recording_id: int | None
    n_frames: int
    offset_mean_deg: dict
    offset_sd_deg: dict
    center_err_mean_mm: np.ndarray
    center_err_sd_mm: np.ndarray


@dataclass(frozen=True)
class FrameResult:
    frame_id: int
    recording_id: int
    marker_px: np.ndarray
    estimate: GazeEstimate
    offsets_deg: dict  # eye/bino -> float or None
    center_err_cam: dict  # eye -> Vec3 or None


@dataclass(frozen=True)
class EvaluationResult:
    rows: list
    frames: list
    batch_centers: dict  # (recording_id, eye) -> Vec3


def gaze_point_mono(
    oa_dir,
    e_now,
    profile: CalibrationProfile,
    eye: str,
    correct: bool = True,
) -> np.ndarray:
    """Map one eye's optical-axis direction to a display pixel."""
    cal = profile.eye(eye)
    v = cal.r_kappa.apply(np.asarray(oa_dir, dtype=float))
    if correct:
        v = v + (np.asarray(e_now, dtype=float) - cal.e_calib) / profile.d_e
    v = profile.r.apply(v)
    if v[2] <= 0.0:
        raise BehindVirtualCamera("mapped gaze direction has non-positive depth")
    fx, fy, cx, cy = profile.k_virtual
    return np.array([fx * v[0] / v[2] + cx, fy * v[1] / v[2] + cy])


def gaze_point_bino(left_px, right_px) -> np.ndarray:
    """Component-wise mean of the two monocular pixels."""
    if left_px is None or right_px is None:
        raise MissingEye("binocular gaze needs both monocular estimates")
    return (np.asarray(left_px, dtype=float) + np.asarray(right_px, dtype=float)) / 2.0


def angular_offset(est_px, truth_px, k_virtual) -> float:
    """Angle in degrees between the backprojected rays of two pixels."""
    fx, fy, cx, cy = k_virtual
    rays = []
    for px in (est_px, truth_px):
        px = np.asarray(px, dtype=float)
        d = np.array([(px[0] - cx) / fx, (px[1] - cy) / fy, 1.0])
        rays.append(d / np.linalg.norm(d))
    dot = float(np.clip(np.dot(rays[0], rays[1]), -1.0, 1.0))
    return math.degrees(math.acos(dot))


def estimate_frame(
    frame,
    rig,
    profile: CalibrationProfile,
    correct: bool = True,
    batch_e: dict | None = None,
) -> GazeEstimate:
    """Gaze for one frame.  An eye whose features are unusable yields None
    for that side rather than failing the frame.  When `batch_e` maps eye
    names to precomputed centers, those replace the single-frame model."""
    mono = {}
    e_now_by_eye = {}
    for eye in EYES:
        try:
            obs = optical_axis_frame(frame, eye, rig)
            cal = profile.eye(eye)
            if batch_e is not None:
                e_now = batch_e[eye]
            else:
                e_now = frame_center(obs, cal.k1, cal.k2)
            px = gaze_point_mono(
                obs.axis.direction, e_now, profile, eye, correct=correct
            )
        except (
            DegenerateFeatures,
            TooFewGlints,
            ThetaOutOfRange,
            BehindVirtualCamera,
        ):
            mono[eye] = None
            e_now_by_eye[eye] = None
            continue
        mono[eye] = px
        e_now_by_eye[eye] = e_now
    bino = None
    if mono["left"] is not None and mono["right"] is not None:
        bino = gaze_point_bino(mono["left"], mono["right"])
    return GazeEstimate(
        frame_id=frame.frame_id,
        left_px=mono["left"],
        right_px=mono["right"],
        bino_px=bino,
        correction_applied=correct,
        e_now=e_now_by_eye,
    )


def _recording_batch_centers(dataset, recording_id: int, mode: str) -> dict:
    from .estimate import axes_for_recording

    out = {}
    for eye in EYES:
        axes = [o.axis for o in axes_for_recording(dataset, eye, recording_id)]
        out[eye] = batch_center(axes, mode=mode)
    return out


def _stats(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def _make_row(subject_id, recording_id, frames) -> ReportRow:
    offs_mean, offs_sd = {}, {}
    for key in ("left", "right", "bino"):
        vals = [f.offsets_deg[key] for f in frames if f.offsets_deg[key] is not None]
        offs_mean[key], offs_sd[key] = _stats(vals) if vals else (math.nan, math.nan)
    errs = [f.center_err_cam[eye] for f in frames for eye in EYES
            if f.center_err_cam[eye] is not None]
    if errs:
        arr = np.abs(np.stack(errs))
        cmean, csd = arr.mean(axis=0), arr.std(axis=0)
    else:
        cmean = csd = np.full(3, math.nan)
    return ReportRow(
        subject_id=subject_id,
        recording_id=recording_id,
        n_frames=len(frames),
        offset_mean_deg=offs_mean,
        offset_sd_deg=offs_sd,
        center_err_mean_mm=cmean,
        center_err_sd_mm=csd,
    )


def evaluate_detailed(
    dataset,
    profile: CalibrationProfile,
    correct: bool = True,
    center_mode: str = "frame",
    recordings=None,
    batch_mode: str = "least_squares",
) -> EvaluationResult:
    """Run the full per-frame pipeline over the test recordings.

    center_mode="frame" uses the single-frame distance-model center for the
    slippage term; "batch" substitutes each recording's batch center.  The
    per-axis center-error statistics always compare the single-frame center
    against the recording's batch center (its reference convention), in the
    primary camera frame.
    """
    if not dataset.has_truth:
        raise MissingGroundTruth("dataset has no ground-truth section")
    if recordings is None:
        recordings = [r for r in dataset.recording_ids() if r != 0]
    frames_out = []
    batch_refs = {}
    for rec in recordings:
        refs = _recording_batch_centers(dataset, rec, batch_mode)
        for eye in EYES:
            batch_refs[(rec, eye)] = refs[eye]
        batch_e = refs if center_mode == "batch" else None
        for frame in dataset.recording(rec):
            est = estimate_frame(
                frame, dataset.rig, profile, correct=correct, batch_e=batch_e
            )
            truth_px = dataset.truth_frames[frame.frame_id].gaze_px
            offsets = {}
            for key, px in (
                ("left", est.left_px),
                ("right", est.right_px),
                ("bino", est.bino_px),
            ):
                offsets[key] = (
                    angular_offset(px, truth_px, profile.k_virtual)
                    if px is not None
                    else None
                )
            cerr = {}
            for eye in EYES:
                cal = profile.eye(eye)
                try:
                    obs = optical_axis_frame(frame, eye, dataset.rig)
                    e_frame = frame_center(obs, cal.k1, cal.k2)
                except (DegenerateFeatures, TooFewGlints, ThetaOutOfRange):
                    cerr[eye] = None
                    continue
                cam0 = dataset.rig.side(eye).cameras[0]
                cerr[eye] = cam0.rot.apply(e_frame - refs[eye])
            frames_out.append(
                FrameResult(
                    frame_id=frame.frame_id,
                    recording_id=rec,
                    marker_px=frame.marker_px,
                    estimate=est,
                    offsets_deg=offsets,
                    center_err_cam=cerr,
                )
            )
    rows = [
        _make_row(dataset.subject_id, rec,
                  [f for f in frames_out if f.recording_id == rec])
        for rec in recordings
    ]
    rows.append(_make_row(dataset.subject_id, None, frames_out))
    return EvaluationResult(rows=rows, frames=frames_out, batch_centers=batch_refs)


def evaluate(dataset, profile: CalibrationProfile, **kwargs) -> list:
    """Per-recording and aggregate evaluation rows for one dataset."""
    return evaluate_detailed(dataset, profile, **kwargs).rows
