"""Serialization for datasets, calibration profiles, and rotations.

Datasets are line-delimited JSON: a header record (scenario + rig +
subject id), one record per frame, then the ground-truth records at the
end so the truth section can be stripped without touching anything the
estimators read.  All encoders emit canonical JSON (sorted keys, compact
separators) and writes are atomic (temp file + rename), so equal inputs
give byte-identical files and a read/write cycle reproduces the input
exactly.

Rotations are stored as quaternions and reconstructed without
renormalization: the parsed floats are kept verbatim, which is what makes
the byte-exact round trip possible.
"""
from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DataFormatError
from .eyemodel import EyeParams
from .geom import Line3, PinholeCamera
from .rig import DisplayModel, EyeSideRig, RigConfig, SlippageTransform
from .sim import (
    CameraFeatures,
    Dataset,
    EyeFeatures,
    EyeTruth,
    FeatureFrame,
    FrameTruth,
    NoiseModel,
    ProtocolSettings,
    Scenario,
    SlippageModel,
    Subject,
)

SCHEMA_VERSION = 1
EYES = ("left", "right")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _vec(a) -> list:
    return [float(x) for x in np.asarray(a, dtype=float).ravel()]


def _px(p):
    return None if p is None else _vec(p)


def encode_rotation(rot: Rotation) -> list:
    return rot.as_quat().tolist()


def decode_rotation(quat) -> Rotation:
    q = np.asarray(quat, dtype=float)
    if q.shape != (4,):
        raise DataFormatError(f"quaternion must have 4 entries, got {q.shape}")
    if abs(np.linalg.norm(q) - 1.0) > 1e-9:
        raise DataFormatError("quaternion not unit length")
    # keep the stored floats verbatim; renormalizing would break byte-exact
    # round trips
    return Rotation(q, normalize=False)


def _camera_to_dict(cam: PinholeCamera) -> dict:
    return {
        "fx": float(cam.fx),
        "fy": float(cam.fy),
        "cx": float(cam.cx),
        "cy": float(cam.cy),
        "width": float(cam.width),
        "height": float(cam.height),
        "quat": encode_rotation(cam.rot),
        "t": _vec(cam.t),
    }


def _camera_from_dict(d: dict) -> PinholeCamera:
    return PinholeCamera(
        fx=float(d["fx"]),
        fy=float(d["fy"]),
        cx=float(d["cx"]),
        cy=float(d["cy"]),
        width=float(d["width"]),
        height=float(d["height"]),
        rot=decode_rotation(d["quat"]),
        t=np.asarray(d["t"], dtype=float),
    )


def _side_to_dict(side: EyeSideRig) -> dict:
    return {
        "cameras": [_camera_to_dict(c) for c in side.cameras],
        "leds": np.asarray(side.leds, dtype=float).tolist(),
        "display": {
            "virtual_cam": _camera_to_dict(side.display.virtual_cam),
            "fov_deg": side.display.fov_deg,
            "d_e": side.display.d_e,
        },
        "nominal_eye_center": _vec(side.nominal_eye_center),
    }


def _side_from_dict(d: dict) -> EyeSideRig:
    cams = [_camera_from_dict(c) for c in d["cameras"]]
    disp = d["display"]
    return EyeSideRig(
        cameras=(cams[0], cams[1]),
        leds=np.asarray(d["leds"], dtype=float),
        display=DisplayModel(
            virtual_cam=_camera_from_dict(disp["virtual_cam"]),
            fov_deg=float(disp["fov_deg"]),
            d_e=float(disp["d_e"]),
        ),
        nominal_eye_center=np.asarray(d["nominal_eye_center"], dtype=float),
    )


def rig_to_dict(rig: RigConfig) -> dict:
    return {"left": _side_to_dict(rig.left), "right": _side_to_dict(rig.right)}


def rig_from_dict(d: dict) -> RigConfig:
    rig = RigConfig(
        left=_side_from_dict(d["left"]), right=_side_from_dict(d["right"])
    )
    rig.validate()
    return rig


def scenario_to_dict(s: Scenario) -> dict:
    return dataclasses.asdict(s)


def scenario_from_dict(d: dict) -> Scenario:
    return Scenario(
        subject_count=int(d["subject_count"]),
        rng_seed=int(d["rng_seed"]),
        noise=NoiseModel(**d["noise"]),
        slippage=SlippageModel(**d["slippage"]),
        protocol=ProtocolSettings(**d["protocol"]),
    )


def subject_to_dict(s: Subject) -> dict:
    return {
        "subject_id": s.subject_id,
        "ipd_mm": s.ipd_mm,
        "left": dataclasses.asdict(s.left),
        "right": dataclasses.asdict(s.right),
    }


def subject_from_dict(d: dict) -> Subject:
    return Subject(
        subject_id=int(d["subject_id"]),
        left=EyeParams(**d["left"]),
        right=EyeParams(**d["right"]),
        ipd_mm=float(d["ipd_mm"]),
    )


def _frame_to_dict(f: FeatureFrame) -> dict:
    eyes = {}
    for eye in EYES:
        eyes[eye] = {
            "cams": [
                {
                    "pupil_px": _px(c.pupil_px),
                    "glints_px": [_px(g) for g in c.glints_px],
                }
                for c in f.eyes[eye].cams
            ]
        }
    return {
        "record": "frame",
        "recording_id": f.recording_id,
        "frame_id": f.frame_id,
        "marker_px": _vec(f.marker_px),
        "eyes": eyes,
    }


def _decode_px(p):
    return None if p is None else np.asarray(p, dtype=float)


def _frame_from_dict(d: dict) -> FeatureFrame:
    eyes = {}
    for eye in EYES:
        cams = []
        for c in d["eyes"][eye]["cams"]:
            glints = tuple(_decode_px(g) for g in c["glints_px"])
            if len(glints) != 6:
                raise DataFormatError("expected 6 glint slots per camera")
            cams.append(CameraFeatures(_decode_px(c["pupil_px"]), glints))
        eyes[eye] = EyeFeatures(cams=(cams[0], cams[1]))
    return FeatureFrame(
        recording_id=int(d["recording_id"]),
        frame_id=int(d["frame_id"]),
        marker_px=np.asarray(d["marker_px"], dtype=float),
        eyes=eyes,
    )


def _truth_frame_to_dict(t: FrameTruth) -> dict:
    eyes = {}
    for eye in EYES:
        et = t.eyes[eye]
        eyes[eye] = {
            "axis_point": _vec(et.axis.point),
            "axis_dir": _vec(et.axis.direction),
            "e_device": _vec(et.e_device),
            "e_cam": _vec(et.e_cam),
            "cg_px": [_px(p) for p in et.cg_px],
        }
    return {
        "record": "truth_frame",
        "frame_id": t.frame_id,
        "gaze_px": _vec(t.gaze_px),
        "eyes": eyes,
    }


def _truth_frame_from_dict(d: dict) -> FrameTruth:
    eyes = {}
    for eye in EYES:
        et = d["eyes"][eye]
        eyes[eye] = EyeTruth(
            axis=Line3(
                np.asarray(et["axis_point"], dtype=float),
                np.asarray(et["axis_dir"], dtype=float),
            ),
            e_device=np.asarray(et["e_device"], dtype=float),
            e_cam=np.asarray(et["e_cam"], dtype=float),
            cg_px=tuple(_decode_px(p) for p in et["cg_px"]),
        )
    return FrameTruth(
        frame_id=int(d["frame_id"]),
        gaze_px=np.asarray(d["gaze_px"], dtype=float),
        eyes=eyes,
    )


def dataset_to_lines(ds: Dataset) -> list:
    lines = [
        canonical_json(
            {
                "record": "header",
                "schema_version": SCHEMA_VERSION,
                "subject_id": ds.subject_id,
                "scenario": scenario_to_dict(ds.scenario),
                "rig": rig_to_dict(ds.rig),
            }
        )
    ]
    for f in ds.frames:
        lines.append(canonical_json(_frame_to_dict(f)))
    if ds.truth_subject is not None:
        lines.append(
            canonical_json(
                {"record": "truth_subject", "subject": subject_to_dict(ds.truth_subject)}
            )
        )
    for rec_id in sorted(ds.truth_recordings or {}):
        slip = ds.truth_recordings[rec_id]
        lines.append(
            canonical_json(
                {
                    "record": "truth_recording",
                    "recording_id": rec_id,
                    "quat": encode_rotation(slip.rotation),
                    "translation": _vec(slip.translation),
                }
            )
        )
    for fid in sorted(ds.truth_frames or {}):
        lines.append(canonical_json(_truth_frame_to_dict(ds.truth_frames[fid])))
    return lines


def write_dataset(ds: Dataset, path) -> None:
    atomic_write_text(path, "\n".join(dataset_to_lines(ds)) + "\n")


def read_dataset(path) -> Dataset:
    """Parse a dataset file.  A file with the truth section stripped loads
    with empty truth fields and feeds the estimators unchanged."""
    header = None
    frames = []
    truth_frames: dict = {}
    truth_recordings: dict = {}
    truth_subject = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                kind = d["record"]
                if kind == "header":
                    if d["schema_version"] != SCHEMA_VERSION:
                        raise DataFormatError(
                            f"unsupported schema_version {d['schema_version']}"
                        )
                    header = d
                elif kind == "frame":
                    frames.append(_frame_from_dict(d))
                elif kind == "truth_frame":
                    t = _truth_frame_from_dict(d)
                    truth_frames[t.frame_id] = t
                elif kind == "truth_recording":
                    truth_recordings[int(d["recording_id"])] = SlippageTransform(
                        decode_rotation(d["quat"]),
                        np.asarray(d["translation"], dtype=float),
                    )
                elif kind == "truth_subject":
                    truth_subject = subject_from_dict(d["subject"])
                else:
                    raise DataFormatError(f"unknown record type {kind!r}")
            except (KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}:{lineno}: bad record: {exc}") from exc
    if header is None:
        raise DataFormatError(f"{path}: missing header record")
    try:
        scenario = scenario_from_dict(header["scenario"])
        rig = rig_from_dict(header["rig"])
        subject_id = int(header["subject_id"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: bad header: {exc}") from exc
    return Dataset(
        scenario=scenario,
        rig=rig,
        subject_id=subject_id,
        frames=frames,
        truth_frames=truth_frames or None,
        truth_recordings=truth_recordings or None,
        truth_subject=truth_subject,
    )


def profile_to_dict(profile) -> dict:
    eyes = {}
    for eye, cal in profile.eyes.items():
        eyes[eye] = {
            "e_calib": _vec(cal.e_calib),
            "k1": cal.k1,
            "k2": cal.k2,
            "quat_kappa": encode_rotation(cal.r_kappa),
            "diagnostics": {k: float(v) for k, v in cal.diagnostics.items()},
        }
    return {
        "schema_version": profile.schema_version,
        "eyes": eyes,
        "quat_r": encode_rotation(profile.r),
        "k_virtual": [float(v) for v in profile.k_virtual],
        "d_e": profile.d_e,
    }


def profile_from_dict(d: dict):
    from .calibrate import CalibrationProfile, EyeCalibration

    if d.get("schema_version") != SCHEMA_VERSION:
        raise DataFormatError(
            f"unsupported profile schema_version {d.get('schema_version')}"
        )
    try:
        eyes = {
            eye: EyeCalibration(
                e_calib=np.asarray(ed["e_calib"], dtype=float),
                k1=float(ed["k1"]),
                k2=float(ed["k2"]),
                r_kappa=decode_rotation(ed["quat_kappa"]),
                diagnostics=dict(ed["diagnostics"]),
            )
            for eye, ed in d["eyes"].items()
        }
        return CalibrationProfile(
            schema_version=SCHEMA_VERSION,
            eyes=eyes,
            r=decode_rotation(d["quat_r"]),
            k_virtual=tuple(float(v) for v in d["k_virtual"]),
            d_e=float(d["d_e"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"bad profile: {exc}") from exc


def write_profile(profile, path) -> None:
    atomic_write_text(
        path, json.dumps(profile_to_dict(profile), sort_keys=True, indent=2) + "\n"
    )


def read_profile(path):
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"profile {path} is not valid JSON: {exc}") from exc
    return profile_from_dict(d)
