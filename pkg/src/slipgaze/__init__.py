"""Slippage-robust gaze estimation for near-eye displays, on synthetic data.

The package simulates the forward optics of an aspheric-cornea eye under a
two-camera-per-eye LED rig, then runs the inverse pipeline: glint-centroid
planes, stereo optical-axis recovery, rotation-center estimation, a
per-subject calibration (distance model + kappa rotation), and a gaze map
whose slippage term corrects headset remounts frame by frame.
"""
from . import errors
from .errors import (
    BehindCamera,
    BehindVirtualCamera,
    CalibrationError,
    ConfigError,
    DataFormatError,
    DegenerateAxes,
    DegenerateBundle,
    DegenerateFeatures,
    DegenerateRotation,
    DegenerateTarget,
    InsufficientSpread,
    InvalidFov,
    MissingEye,
    MissingGroundTruth,
    NoConvergence,
    NoSolution,
    NotEnoughAxes,
    NoVisibleReflection,
    OffSurface,
    OutOfBounds,
    ParallelLines,
    ParallelPlanes,
    SlipgazeError,
    SlipTooLarge,
    ThetaOutOfRange,
    TooFewGlints,
    TotalInternalReflection,
)
from .calibrate import (
    CalibrationProfile,
    EyeCalibration,
    KFit,
    calibrate_dataset,
    calibrate_session,
    fit_k,
    fit_kappa,
)
from .config import RunConfig, load_config
from .dataio import read_dataset, read_profile, write_dataset, write_profile
from .estimate import (
    AxisObservation,
    batch_center,
    camera_plane,
    frame_center,
    glint_centroid,
    optical_axis_frame,
)
from .eyemodel import (
    EyeParams,
    EyePose,
    SurfacePoint,
    camera_coincident_glint,
    cornea_center,
    glint_point,
    glint_points,
    optical_axis,
    pose_fixating,
    pupil_center,
    visual_axis,
    virtual_pupil_image,
    virtual_pupil_trace,
)
from .gaze import (
    GazeEstimate,
    ReportRow,
    angular_offset,
    estimate_frame,
    evaluate,
    evaluate_detailed,
    gaze_point_bino,
    gaze_point_mono,
)
from .geom import Line3, PinholeCamera, Plane3, Ray3
from .rig import (
    DisplayModel,
    EyeSideRig,
    RigConfig,
    SlippageTransform,
    apply_slippage,
    build_default_rig,
    marker_world_position,
    virtual_intrinsics,
)
from .sim import (
    Dataset,
    FeatureFrame,
    NoiseModel,
    ProtocolSettings,
    Scenario,
    SlippageModel,
    Subject,
    generate_subject,
    marker_protocol,
    render_frame,
    sample_slippage,
    simulate_scenario,
    simulate_session,
    subject_rng,
)

__version__ = "0.1.0"

__all__ = [
    "AxisObservation",
    "BehindCamera",
    "BehindVirtualCamera",
    "CalibrationError",
    "CalibrationProfile",
    "ConfigError",
    "DataFormatError",
    "Dataset",
    "DegenerateAxes",
    "DegenerateBundle",
    "DegenerateFeatures",
    "DegenerateRotation",
    "DegenerateTarget",
    "DisplayModel",
    "EyeCalibration",
    "EyeParams",
    "EyePose",
    "EyeSideRig",
    "FeatureFrame",
    "GazeEstimate",
    "InsufficientSpread",
    "InvalidFov",
    "KFit",
    "Line3",
    "MissingEye",
    "MissingGroundTruth",
    "NoConvergence",
    "NoSolution",
    "NotEnoughAxes",
    "NoVisibleReflection",
    "NoiseModel",
    "OffSurface",
    "OutOfBounds",
    "ParallelLines",
    "ParallelPlanes",
    "PinholeCamera",
    "Plane3",
    "ProtocolSettings",
    "Ray3",
    "ReportRow",
    "RigConfig",
    "RunConfig",
    "Scenario",
    "SlipTooLarge",
    "SlipgazeError",
    "SlippageModel",
    "SlippageTransform",
    "Subject",
    "SurfacePoint",
    "ThetaOutOfRange",
    "TooFewGlints",
    "TotalInternalReflection",
    "angular_offset",
    "apply_slippage",
    "batch_center",
    "build_default_rig",
    "calibrate_dataset",
    "calibrate_session",
    "camera_coincident_glint",
    "camera_plane",
    "cornea_center",
    "errors",
    "estimate_frame",
    "evaluate",
    "evaluate_detailed",
    "fit_k",
    "fit_kappa",
    "frame_center",
    "gaze_point_bino",
    "gaze_point_mono",
    "generate_subject",
    "glint_centroid",
    "glint_point",
    "glint_points",
    "load_config",
    "marker_protocol",
    "marker_world_position",
    "optical_axis",
    "optical_axis_frame",
    "pose_fixating",
    "pupil_center",
    "read_dataset",
    "read_profile",
    "render_frame",
    "sample_slippage",
    "simulate_scenario",
    "simulate_session",
    "subject_rng",
    "virtual_intrinsics",
    "virtual_pupil_image",
    "virtual_pupil_trace",
    "visual_axis",
    "write_dataset",
    "write_profile",
]
