"""Synthetic data generation: subjects, the marker protocol, remount
slippage, and noisy feature-level rendering with a separable ground-truth
channel.

The head frame is the device frame at calibration time.  Eyes stay fixed in
the head; slippage moves every rig element.  Estimators always work in the
calibration-time device frame (the rig stored in the dataset header), so
slippage shows up to them as an apparent eye displacement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from . import eyemodel
from .errors import SlipgazeError
from .eyemodel import EyeParams, EyePose
from .geom import Line3, PinholeCamera, Vec3, project
from .rig import (
    RigConfig,
    SlippageTransform,
    apply_slippage,
    build_default_rig,
    marker_world_position,
)

EYES = ("left", "right")


@dataclass(frozen=True)
class NoiseModel:
    """Detection noise stand-in: Gaussian pixel noise + per-glint dropout."""

    pupil_sigma_px: float = 0.3
    glint_sigma_px: float = 0.5
    dropout_p: float = 0.02

    def __post_init__(self):
        if self.pupil_sigma_px < 0 or self.glint_sigma_px < 0:
            raise ValueError("sigmas must be >= 0")
        if not 0.0 <= self.dropout_p <= 1.0:
            raise ValueError("dropout_p must be in [0, 1]")


@dataclass(frozen=True)
class SlippageModel:
    """Remount sampling: translation N(0, sigma) per axis; rotation about a
    uniform random axis with angle N(0, sigma); draws over the caps are
    resampled from the same stream."""

    trans_sigma_mm: float = 1.5
    rot_sigma_deg: float = 0.8
    max_translation_mm: float = 5.0
    max_rotation_deg: float = 3.0


@dataclass(frozen=True)
class ProtocolSettings:
    frames_per_marker: int = 8
    test_recordings: int = 3

    def __post_init__(self):
        if self.frames_per_marker < 1 or self.test_recordings < 1:
            raise ValueError("protocol counts must be >= 1")


@dataclass(frozen=True)
class Scenario:
    """Everything that determines a simulation run, seed included."""

    subject_count: int = 9
    rng_seed: int = 0
    noise: NoiseModel = field(default_factory=NoiseModel)
    slippage: SlippageModel = field(default_factory=SlippageModel)
    protocol: ProtocolSettings = field(default_factory=ProtocolSettings)


@dataclass(frozen=True)
class Subject:
    subject_id: int
    left: EyeParams
    right: EyeParams
    ipd_mm: float

    def eye(self, name: str) -> EyeParams:
        if name not in EYES:
            raise ValueError(f"eye must be one of {EYES}, got {name!r}")
        return self.left if name == "left" else self.right


@dataclass(frozen=True)
class CameraFeatures:
    """One camera's detections; missing pixels are None.  A camera is usable
    when the pupil and at least 3 glints are present."""

    pupil_px: np.ndarray | None
    glints_px: tuple  # length 6, entries np.ndarray or None

    @property
    def valid(self) -> bool:
        present = sum(g is not None for g in self.glints_px)
        return self.pupil_px is not None and present >= 3


@dataclass(frozen=True)
class EyeFeatures:
    cams: tuple[CameraFeatures, CameraFeatures]


@dataclass(frozen=True)
class FeatureFrame:
    recording_id: int
    frame_id: int
    marker_px: np.ndarray
    eyes: dict  # eye name -> EyeFeatures


@dataclass(frozen=True)
class EyeTruth:
    """Oracle values for one eye in one frame (device = head frame)."""

    axis: Line3
    e_device: Vec3
    e_cam: Vec3  # E in the primary (slipped) camera frame
    cg_px: tuple  # per camera: exact coincident-glint pixel or None


@dataclass(frozen=True)
class FrameTruth:
    frame_id: int
    gaze_px: np.ndarray
    eyes: dict  # eye name -> EyeTruth


@dataclass(frozen=True)
class Dataset:
    """One subject's session: header (scenario + rig), frames, and the
    separable ground-truth section."""

    scenario: Scenario
    rig: RigConfig
    subject_id: int
    frames: list
    truth_frames: dict | None = None  # frame_id -> FrameTruth
    truth_recordings: dict | None = None  # recording_id -> SlippageTransform
    truth_subject: Subject | None = None

    @property
    def has_truth(self) -> bool:
        return bool(self.truth_frames)

    def recording(self, recording_id: int) -> list:
        return [f for f in self.frames if f.recording_id == recording_id]

    def recording_ids(self) -> list[int]:
        return sorted({f.recording_id for f in self.frames})


def marker_protocol() -> tuple[tuple, tuple]:
    """Display marker pixels: 9 calibration markers (3x3) strictly inside
    the 5x5 grid of 25 test markers; both grids centered on the display."""
    w, h = 1920.0, 1080.0
    test = tuple(
        (w * a, h * b)
        for b in (0.1, 0.3, 0.5, 0.7, 0.9)
        for a in (0.1, 0.3, 0.5, 0.7, 0.9)
    )
    calib = tuple(
        (w * a, h * b) for b in (0.3, 0.5, 0.7) for a in (0.3, 0.5, 0.7)
    )
    return calib, test


def generate_subject(rng: np.random.Generator, subject_id: int = 0) -> Subject:
    """Sample one subject in physiological ranges.  kappa_h is nasal: +x for
    the left eye, -x for the right, so the sign is mirrored."""
    eyes = {}
    for name, nasal in (("left", +1.0), ("right", -1.0)):
        r = rng.uniform(7.2, 8.4)
        q = rng.uniform(-0.45, -0.15)
        kh = rng.uniform(3.0, 6.0)
        kv = rng.uniform(0.5, 2.5)
        apex = r / math.sqrt(q + 1.0)
        eyes[name] = EyeParams(
            r=r,
            q=q,
            t=13.5 - apex,
            d_pupil=apex - 3.6,
            n_refr=1.3375,
            kappa_h_deg=nasal * kh,
            kappa_v_deg=kv,
        )
    ipd = rng.uniform(56.0, 72.0)
    return Subject(subject_id, eyes["left"], eyes["right"], ipd)


def sample_slippage(model: SlippageModel, rng: np.random.Generator) -> SlippageTransform:
    """One remount draw; resampled (same stream) until inside the caps."""
    while True:
        t = rng.normal(0.0, model.trans_sigma_mm, 3)
        axis = rng.normal(0.0, 1.0, 3)
        axis /= np.linalg.norm(axis)
        ang = rng.normal(0.0, model.rot_sigma_deg)
        if (
            np.linalg.norm(t) <= model.max_translation_mm
            and abs(ang) <= model.max_rotation_deg
        ):
            return SlippageTransform(
                Rotation.from_rotvec(axis * math.radians(ang)), t
            )


@dataclass(frozen=True)
class _CleanEye:
    pose: EyePose
    pupil_px: tuple  # per camera: pixel or None
    glints_px: tuple  # per camera: (6, 2) array or None
    cg_px: tuple  # per camera: exact coincident-glint pixel or None
    cam_ok: tuple  # per camera: bool


def _render_clean_eye(
    params: EyeParams, side, eye_center: Vec3, target: Vec3
) -> _CleanEye:
    """Noise-free optics for one eye: pose, pupil / glint / coincident-glint
    pixels per camera.  Optics failures flag the camera, never raise."""
    pose = eyemodel.pose_fixating(params, eye_center, target)
    pupils, glints, cgs, oks = [], [], [], []
    for cam, ring in zip(side.cameras, side.leds):
        try:
            ppx = eyemodel.virtual_pupil_image(params, pose, cam)
            pts = eyemodel.glint_points(params, pose, ring, cam.center)
            gpx = np.stack([project(cam, sp.position) for sp in pts])
            cg = project(
                cam, eyemodel.camera_coincident_glint(params, pose, cam.center).position
            )
        except SlipgazeError:
            pupils.append(None)
            glints.append(None)
            cgs.append(None)
            oks.append(False)
            continue
        pupils.append(ppx)
        glints.append(gpx)
        cgs.append(cg)
        oks.append(True)
    return _CleanEye(pose, tuple(pupils), tuple(glints), tuple(cgs), tuple(oks))


def _in_bounds(px, cam: PinholeCamera) -> bool:
    return 0.0 <= px[0] <= cam.width and 0.0 <= px[1] <= cam.height


def _noisy_features(
    clean: _CleanEye, side, noise: NoiseModel, rng: np.random.Generator
) -> EyeFeatures:
    cams = []
    for ci, cam in enumerate(side.cameras):
        if not clean.cam_ok[ci]:
            cams.append(CameraFeatures(None, (None,) * 6))
            continue
        ppx = clean.pupil_px[ci] + rng.normal(0.0, noise.pupil_sigma_px, 2)
        gpx = clean.glints_px[ci] + rng.normal(0.0, noise.glint_sigma_px, (6, 2))
        keep = rng.random(6) >= noise.dropout_p
        if not _in_bounds(ppx, cam):
            ppx = None
        glints = tuple(
            g if k and _in_bounds(g, cam) else None for g, k in zip(gpx, keep)
        )
        cams.append(CameraFeatures(ppx, glints))
    return EyeFeatures(cams=(cams[0], cams[1]))


def render_frame(
    subject: Subject,
    rig_slipped: RigConfig,
    marker_px,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> tuple[FeatureFrame, FrameTruth]:
    """Render one frame: pose both eyes at the marker's world position, run
    the forward optics, add noise and dropout, and record truth.  Per-camera
    optics failures become invalid flags."""
    marker_px = np.asarray(marker_px, dtype=float)
    feats, truths = {}, {}
    for eye in EYES:
        side = rig_slipped.side(eye)
        target = marker_world_position(side.display, marker_px)
        params = subject.eye(eye)
        clean = _render_clean_eye(params, side, side.nominal_eye_center, target)
        feats[eye] = _noisy_features(clean, side, noise, rng)
        truths[eye] = _eye_truth(params, clean, side)
    frame = FeatureFrame(
        recording_id=0, frame_id=0, marker_px=marker_px, eyes=feats
    )
    truth = FrameTruth(frame_id=0, gaze_px=marker_px.copy(), eyes=truths)
    return frame, truth


def _eye_truth(params: EyeParams, clean: _CleanEye, side) -> EyeTruth:
    e_dev = clean.pose.rotation_center
    cam0 = side.cameras[0]
    return EyeTruth(
        axis=eyemodel.optical_axis(params, clean.pose),
        e_device=e_dev.copy(),
        e_cam=cam0.rot.apply(e_dev) + cam0.t,
        cg_px=clean.cg_px,
    )


def _noise_rng(seed: int, subject_id: int, recording_id: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(2, subject_id, recording_id))
    return np.random.Generator(np.random.PCG64(ss))


def _slip_rng(seed: int, subject_id: int, recording_id: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(3, subject_id, recording_id))
    return np.random.Generator(np.random.PCG64(ss))


def subject_rng(seed: int, subject_id: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(1, subject_id))
    return np.random.Generator(np.random.PCG64(ss))


def simulate_session(
    subject: Subject, rig: RigConfig, scenario: Scenario
) -> Dataset:
    """One subject's session: recording 0 over the 9 calibration markers
    (slippage = identity by convention), then `test_recordings` recordings
    over all 25 markers, each after an independent remount draw; N frames
    per marker.

    Frames of one marker share the pose, so the noise-free optics are
    computed once per (recording, marker) and only the noise is per-frame.
    """
    calib, test = marker_protocol()
    frames: list[FeatureFrame] = []
    truth_frames: dict[int, FrameTruth] = {}
    truth_recordings: dict[int, SlippageTransform] = {}
    frame_id = 0
    n_rec = 1 + scenario.protocol.test_recordings
    for rec in range(n_rec):
        if rec == 0:
            slip = SlippageTransform.identity()
        else:
            slip = sample_slippage(
                scenario.slippage, _slip_rng(scenario.rng_seed, subject.subject_id, rec)
            )
        truth_recordings[rec] = slip
        rig_slipped = apply_slippage(
            rig,
            slip,
            scenario.slippage.max_translation_mm,
            scenario.slippage.max_rotation_deg,
        )
        rng = _noise_rng(scenario.rng_seed, subject.subject_id, rec)
        markers = calib if rec == 0 else test
        for marker in markers:
            marker_px = np.asarray(marker, dtype=float)
            cleans = {}
            for eye in EYES:
                side = rig_slipped.side(eye)
                target = marker_world_position(side.display, marker_px)
                cleans[eye] = _render_clean_eye(
                    subject.eye(eye), side, side.nominal_eye_center, target
                )
            for _ in range(scenario.protocol.frames_per_marker):
                feats = {
                    eye: _noisy_features(
                        cleans[eye], rig_slipped.side(eye), scenario.noise, rng
                    )
                    for eye in EYES
                }
                frames.append(
                    FeatureFrame(
                        recording_id=rec,
                        frame_id=frame_id,
                        marker_px=marker_px.copy(),
                        eyes=feats,
                    )
                )
                truth_frames[frame_id] = FrameTruth(
                    frame_id=frame_id,
                    gaze_px=marker_px.copy(),
                    eyes={
                        eye: _eye_truth(
                            subject.eye(eye), cleans[eye], rig_slipped.side(eye)
                        )
                        for eye in EYES
                    },
                )
                frame_id += 1
    return Dataset(
        scenario=scenario,
        rig=rig,
        subject_id=subject.subject_id,
        frames=frames,
        truth_frames=truth_frames,
        truth_recordings=truth_recordings,
        truth_subject=subject,
    )


def simulate_scenario(scenario: Scenario, ipd_rig_builder=build_default_rig):
    """Generate all subjects' sessions for a scenario.  Yields (subject,
    rig, dataset) in subject order; the rig follows each subject's IPD."""
    for sid in range(scenario.subject_count):
        subject = generate_subject(subject_rng(scenario.rng_seed, sid), sid)
        rig = ipd_rig_builder(ipd_mm=subject.ipd_mm)
        yield subject, rig, simulate_session(subject, rig, scenario)
