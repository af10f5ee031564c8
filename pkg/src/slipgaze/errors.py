"""Exception hierarchy.

Every failure mode of the library raises a subclass of SlipgazeError so the
CLI can map them onto exit codes without string matching.
"""


class SlipgazeError(Exception):
    """Base class for all slipgaze errors."""


class ConfigError(SlipgazeError):
    """Bad run configuration (schema violation, unknown key, bad value)."""


class DataFormatError(SlipgazeError):
    """Malformed dataset / profile file."""


# geometry
class BehindCamera(SlipgazeError):
    """Point has non-positive depth in the camera frame."""


class ParallelPlanes(SlipgazeError):
    """Two planes are parallel within tolerance; no intersection line."""


class ParallelLines(SlipgazeError):
    """Ray and line are parallel; closest point is not unique."""


class DegenerateRotation(SlipgazeError):
    """Minimal rotation between antiparallel directions is ambiguous."""


# eye model
class OffSurface(SlipgazeError):
    """Point does not satisfy the cornea surface equation."""


class DegenerateTarget(SlipgazeError):
    """Fixation target coincides with (or is inside) the eye."""


class NoVisibleReflection(SlipgazeError):
    """Glint solver left the anterior corneal cap (z_local <= 0)."""


class NoSolution(SlipgazeError):
    """Coincident-glint normal line cannot reach the camera center."""


class TotalInternalReflection(SlipgazeError):
    """Refracted exit ray does not exist at the incidence angle."""


class NoConvergence(SlipgazeError):
    """Iterative solver failed to reach its tolerance."""


# rig
class InvalidFov(SlipgazeError):
    """Field of view outside (0, 180) degrees."""


class SlipTooLarge(SlipgazeError):
    """Slippage transform exceeds the configured magnitude caps."""


class OutOfBounds(SlipgazeError):
    """Pixel outside the display bounds."""


# estimation
class DegenerateFeatures(SlipgazeError):
    """Pupil and glint pixels too close to define a plane."""


class TooFewGlints(SlipgazeError):
    """Fewer than 3 valid glints for a camera."""


class NotEnoughAxes(SlipgazeError):
    """Batch center needs at least 2 pairwise non-parallel axes."""


class DegenerateBundle(SlipgazeError):
    """All axes parallel within tolerance; center unobservable."""


class ThetaOutOfRange(SlipgazeError):
    """theta too close to 90 degrees for the tan^2 distance model."""


# calibration
class InsufficientSpread(SlipgazeError):
    """tan^2(theta) range too narrow to identify k2."""


class DegenerateAxes(SlipgazeError):
    """Axis directions (near-)coplanar or too few for kappa fitting."""


class CalibrationError(SlipgazeError):
    """Session cannot be calibrated (missing recording 0, < 6 usable frames)."""


# gaze
class BehindVirtualCamera(SlipgazeError):
    """Mapped gaze ray has non-positive depth in the display camera."""


class MissingEye(SlipgazeError):
    """Binocular fuse requires both monocular estimates."""


class MissingGroundTruth(SlipgazeError):
    """Evaluation requested on a dataset without a ground-truth section."""
