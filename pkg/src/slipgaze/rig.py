"""Device geometry: per-eye stereo cameras, LED rings, and the display
modeled as a virtual scene camera, all in a device frame; plus the rigid
slippage transform applied to the whole device.

Device frame: +x toward the wearer's right, +y down, +z forward (out of the
face toward the display's virtual image plane).  The wearer's left eye sits
at x = -ipd/2, so "nasal" is +x for the left eye and -x for the right.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import InvalidFov, OutOfBounds, SlipTooLarge
from .geom import (
    PinholeCamera,
    Vec3,
    backproject,
    look_at_camera,
    unit,
)

LED_WAVELENGTH_NM = 850  # metadata only; no spectral modeling
LEDS_PER_CAMERA = 6

# invented default layout (the hardware description gives no coordinates);
# every value is config-overridable
DEFAULT_IPD_MM = 64.0
DEFAULT_CAM_AZIMUTHS_DEG = (0.0, -22.0)  # nasal-positive, per eye
DEFAULT_CAM_POLAR_DEG = 21.5  # below the optical axis
DEFAULT_CAM_DISTANCE_MM = 35.0
DEFAULT_EYE_CAM_FOCAL_PX = 800.0
DEFAULT_EYE_CAM_RES = (640, 480)
DEFAULT_LED_RING_RADIUS_MM = 2.5
DEFAULT_DISPLAY_FOV_DEG = 44.0
DEFAULT_DISPLAY_RES = (1920, 1080)
DEFAULT_D_E_MM = 1000.0
# nominal cornea-center offset from E used to aim the eye cameras
NOMINAL_C_OFFSET_MM = 13.5 - 7.8 / math.sqrt(0.7)


@dataclass(frozen=True)
class DisplayModel:
    """The near-eye display as a virtual scene camera with its image plane
    at distance d_e (mm) from the nominal eye center."""

    virtual_cam: PinholeCamera
    fov_deg: float
    d_e: float

    def __post_init__(self):
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError("fov_deg must be in (0, 180)")
        if not self.d_e > 0:
            raise ValueError("d_e must be positive")


@dataclass(frozen=True)
class SlippageTransform:
    """Rigid motion of the device relative to the head: x -> R x + t."""

    rotation: Rotation
    translation: Vec3

    @classmethod
    def identity(cls) -> "SlippageTransform":
        return cls(Rotation.identity(), np.zeros(3))

    @property
    def angle_deg(self) -> float:
        return math.degrees(float(np.linalg.norm(self.rotation.as_rotvec())))

    def apply_point(self, p) -> Vec3:
        return self.rotation.apply(np.asarray(p, dtype=float)) + self.translation

    def compose(self, first: "SlippageTransform") -> "SlippageTransform":
        """self after first: (self o first)(x) = self(first(x))."""
        return SlippageTransform(
            self.rotation * first.rotation,
            self.rotation.apply(first.translation) + self.translation,
        )


@dataclass(frozen=True)
class EyeSideRig:
    """One eye's hardware: 2 cameras, a 6-LED ring per camera, one display
    virtual camera.  LED positions are (2, 6, 3), device frame, mm."""

    cameras: tuple[PinholeCamera, PinholeCamera]
    leds: np.ndarray
    display: DisplayModel
    nominal_eye_center: Vec3


@dataclass(frozen=True)
class RigConfig:
    left: EyeSideRig
    right: EyeSideRig

    def side(self, eye: str) -> EyeSideRig:
        if eye not in ("left", "right"):
            raise ValueError(f"eye must be 'left' or 'right', got {eye!r}")
        return self.left if eye == "left" else self.right

    def validate(self) -> None:
        """Structural invariants: ring centroids near their cameras, camera
        baselines > 5 mm, hardware counts."""
        for side in (self.left, self.right):
            if len(side.cameras) != 2 or side.leds.shape != (2, 6, 3):
                raise ValueError("each eye needs 2 cameras with 6 LEDs each")
            base = np.linalg.norm(side.cameras[0].center - side.cameras[1].center)
            if base <= 5.0:
                raise ValueError(f"camera baseline {base:.2f} mm <= 5 mm")
            for cam, ring in zip(side.cameras, side.leds):
                gap = np.linalg.norm(ring.mean(axis=0) - cam.center)
                if gap >= 2.0:
                    raise ValueError(f"LED centroid {gap:.2f} mm from its camera")


def virtual_intrinsics(fov_deg: float, width_px: int, height_px: int):
    """Display-camera intrinsics from the horizontal field of view:
    fx = fy = (width/2) / tan(fov/2), principal point at the image center."""
    if not 0.0 < fov_deg < 180.0:
        raise InvalidFov(f"fov {fov_deg} deg outside (0, 180)")
    f = (width_px / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    return f, f, width_px / 2.0, height_px / 2.0


def build_default_rig(
    ipd_mm: float = DEFAULT_IPD_MM,
    cam_azimuths_deg=DEFAULT_CAM_AZIMUTHS_DEG,
    cam_polar_deg: float = DEFAULT_CAM_POLAR_DEG,
    cam_distance_mm: float = DEFAULT_CAM_DISTANCE_MM,
    eye_cam_focal_px: float = DEFAULT_EYE_CAM_FOCAL_PX,
    eye_cam_res=DEFAULT_EYE_CAM_RES,
    led_ring_radius_mm: float = DEFAULT_LED_RING_RADIUS_MM,
    display_fov_deg: float = DEFAULT_DISPLAY_FOV_DEG,
    display_res=DEFAULT_DISPLAY_RES,
    d_e_mm: float = DEFAULT_D_E_MM,
) -> RigConfig:
    """Construct the default rig for a given interpupillary distance.

    Eye cameras sit cam_distance_mm from the nominal cornea center, below it
    by cam_polar_deg and offset horizontally by the nasal-positive azimuths,
    aimed at the cornea center.  Each LED ring lies in its camera's
    transverse plane, centered on the camera, so the ring centroid coincides
    with the camera center.  The display virtual camera sits at the nominal
    eye center, axis-aligned with the device.
    """
    fx, fy, cx, cy = virtual_intrinsics(display_fov_deg, *display_res)
    w_eye, h_eye = eye_cam_res
    sides = {}
    for eye, nasal in (("left", +1.0), ("right", -1.0)):
        e0 = np.array([-nasal * ipd_mm / 2.0, 0.0, 0.0])
        c0 = e0 + np.array([0.0, 0.0, NOMINAL_C_OFFSET_MM])
        vcam = PinholeCamera(
            fx, fy, cx, cy, display_res[0], display_res[1],
            Rotation.identity(), -e0,
        )
        display = DisplayModel(vcam, display_fov_deg, d_e_mm)
        cams = []
        rings = []
        for az in cam_azimuths_deg:
            d = unit(
                [
                    math.tan(math.radians(az * nasal)),
                    math.tan(math.radians(cam_polar_deg)),
                    1.0,
                ]
            )
            ctr = c0 + cam_distance_mm * d
            cam = look_at_camera(
                ctr, c0, eye_cam_focal_px, eye_cam_focal_px,
                w_eye / 2.0, h_eye / 2.0, w_eye, h_eye,
            )
            x_axis, y_axis = cam.rot.as_matrix()[0], cam.rot.as_matrix()[1]
            ring = np.stack(
                [
                    ctr
                    + led_ring_radius_mm
                    * (
                        math.cos(2 * math.pi * k / 6 + math.pi / 6) * x_axis
                        + math.sin(2 * math.pi * k / 6 + math.pi / 6) * y_axis
                    )
                    for k in range(6)
                ]
            )
            cams.append(cam)
            rings.append(ring)
        sides[eye] = EyeSideRig(
            cameras=(cams[0], cams[1]),
            leds=np.stack(rings),
            display=display,
            nominal_eye_center=e0,
        )
    rig = RigConfig(left=sides["left"], right=sides["right"])
    rig.validate()
    return rig


def apply_slippage(
    rig: RigConfig,
    slip: SlippageTransform,
    max_translation_mm: float = 5.0,
    max_rotation_deg: float = 3.0,
) -> RigConfig:
    """Move every rig element (camera poses, LEDs, display camera) by the
    same rigid transform; eye geometry is untouched.

    Raises SlipTooLarge beyond the magnitude caps.
    """
    # tiny slack keeps transforms built exactly at the cap inside it
    if np.linalg.norm(slip.translation) > max_translation_mm + 1e-9:
        raise SlipTooLarge(
            f"translation {np.linalg.norm(slip.translation):.2f} mm over cap"
        )
    if slip.angle_deg > max_rotation_deg + 1e-9:
        raise SlipTooLarge(f"rotation {slip.angle_deg:.2f} deg over cap")
    # exact identity passes through untouched (keeps rec-0 rigs bit-stable)
    if not slip.translation.any() and slip.rotation.magnitude() == 0.0:
        return rig

    def move_cam(cam: PinholeCamera) -> PinholeCamera:
        new_center = slip.apply_point(cam.center)
        new_rot = cam.rot * slip.rotation.inv()
        return replace(cam, rot=new_rot, t=-new_rot.apply(new_center))

    def move_side(side: EyeSideRig) -> EyeSideRig:
        return EyeSideRig(
            cameras=(move_cam(side.cameras[0]), move_cam(side.cameras[1])),
            leds=np.asarray(
                [[slip.apply_point(p) for p in ring] for ring in side.leds]
            ),
            display=DisplayModel(
                move_cam(side.display.virtual_cam),
                side.display.fov_deg,
                side.display.d_e,
            ),
            nominal_eye_center=side.nominal_eye_center,
        )

    return RigConfig(left=move_side(rig.left), right=move_side(rig.right))


def marker_world_position(display: DisplayModel, pixel) -> Vec3:
    """3D fixation target for a display pixel: the backprojected ray scaled
    to camera-frame depth d_e.

    Raises OutOfBounds for pixels outside the display.
    """
    u, v = float(pixel[0]), float(pixel[1])
    cam = display.virtual_cam
    if not (0.0 <= u <= cam.width and 0.0 <= v <= cam.height):
        raise OutOfBounds(f"pixel ({u}, {v}) outside {cam.width}x{cam.height}")
    ray = backproject(cam, (u, v))
    d_cam_z = cam.rot.apply(ray.direction)[2]
    return ray.origin + (display.d_e / d_cam_z) * ray.direction
