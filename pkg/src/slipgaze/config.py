"""Run configuration: a single JSON file with an explicit schema version.

Unknown keys are rejected everywhere so typos fail loudly, and every
validation error is reported with its field path.  Environment variables
deliberately play no role; a run is reproducible from (config file, seed)
alone.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import rig as rigmod
from . import sim
from .errors import ConfigError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class NoiseConfig(_Strict):
    pupil_sigma_px: float = Field(default=0.3, ge=0.0)
    glint_sigma_px: float = Field(default=0.5, ge=0.0)
    dropout_p: float = Field(default=0.02, ge=0.0, le=1.0)


class SlippageConfig(_Strict):
    trans_sigma_mm: float = Field(default=1.5, ge=0.0)
    rot_sigma_deg: float = Field(default=0.8, ge=0.0)
    max_translation_mm: float = Field(default=5.0, gt=0.0)
    max_rotation_deg: float = Field(default=3.0, gt=0.0)


class ProtocolConfig(_Strict):
    frames_per_marker: int = Field(default=8, ge=1)
    test_recordings: int = Field(default=3, ge=1)


class RigSettings(_Strict):
    ipd_mm: float = Field(default=rigmod.DEFAULT_IPD_MM, gt=30.0, lt=90.0)
    cam_azimuths_deg: tuple[float, float] = rigmod.DEFAULT_CAM_AZIMUTHS_DEG
    cam_polar_deg: float = rigmod.DEFAULT_CAM_POLAR_DEG
    cam_distance_mm: float = Field(default=rigmod.DEFAULT_CAM_DISTANCE_MM, gt=5.0)
    eye_cam_focal_px: float = Field(default=rigmod.DEFAULT_EYE_CAM_FOCAL_PX, gt=0.0)
    eye_cam_resolution: tuple[int, int] = rigmod.DEFAULT_EYE_CAM_RES
    led_ring_radius_mm: float = Field(
        default=rigmod.DEFAULT_LED_RING_RADIUS_MM, gt=0.0
    )
    display_fov_deg: float = Field(
        default=rigmod.DEFAULT_DISPLAY_FOV_DEG, gt=0.0, lt=180.0
    )
    display_resolution: tuple[int, int] = rigmod.DEFAULT_DISPLAY_RES
    d_e_mm: float = Field(default=rigmod.DEFAULT_D_E_MM, gt=0.0)


class PipelineConfig(_Strict):
    correction: bool = True
    center_mode: Literal["frame", "batch"] = "frame"
    batch_mode: Literal["least_squares", "l1"] = "least_squares"


class RunConfig(_Strict):
    schema_version: Literal[1] = 1
    seed: int = Field(default=0, ge=0)
    subject_count: int = Field(default=9, ge=1)
    out_dir: str = "out"
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    slippage: SlippageConfig = Field(default_factory=SlippageConfig)
    protocol: ProtocolConfig = Field(default_factory=ProtocolConfig)
    rig: RigSettings = Field(default_factory=RigSettings)
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)

    def scenario(self) -> sim.Scenario:
        return sim.Scenario(
            subject_count=self.subject_count,
            rng_seed=self.seed,
            noise=sim.NoiseModel(**self.noise.model_dump()),
            slippage=sim.SlippageModel(**self.slippage.model_dump()),
            protocol=sim.ProtocolSettings(**self.protocol.model_dump()),
        )

    def build_rig(self, ipd_mm: float | None = None) -> rigmod.RigConfig:
        return rigmod.build_default_rig(
            ipd_mm=self.rig.ipd_mm if ipd_mm is None else ipd_mm,
            cam_azimuths_deg=self.rig.cam_azimuths_deg,
            cam_polar_deg=self.rig.cam_polar_deg,
            cam_distance_mm=self.rig.cam_distance_mm,
            eye_cam_focal_px=self.rig.eye_cam_focal_px,
            eye_cam_res=self.rig.eye_cam_resolution,
            led_ring_radius_mm=self.rig.led_ring_radius_mm,
            display_fov_deg=self.rig.display_fov_deg,
            display_res=self.rig.display_resolution,
            d_e_mm=self.rig.d_e_mm,
        )


def _field_path(err: dict) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        lines = [f"{_field_path(e)}: {e['msg']}" for e in exc.errors()]
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines)) from exc


def load_config(path) -> RunConfig:
    """Read and validate a JSON run config; raises ConfigError with field
    paths on any violation."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    return parse_config(data)
