"""Exception hierarchy for scenereg

Every error carries the process exit code the command line maps it to.
"""

EXIT_OK = 0
EXIT_GENERIC = 1
EXIT_PARTIAL = 2
EXIT_METRIC = 3
EXIT_USAGE = 64
EXIT_DATA_FORMAT = 65
EXIT_IO = 66


class SceneRegError(Exception):
    """Base exception for scenereg errors"""

    exit_code = EXIT_GENERIC


class CommandUsageError(SceneRegError):
    """A command was called with inputs that cannot satisfy its preconditions"""

    exit_code = EXIT_USAGE


# Data format -------------------------------------------------------------


class ParseError(SceneRegError):
    """Malformed input file or string"""

    exit_code = EXIT_DATA_FORMAT


class ManifestError(ParseError):
    """Scene manifest does not follow the v1 schema"""


class ContainerFormatError(ParseError):
    """Binary MODW container is corrupted"""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


# Geometry -----------------------------------------------------------------


class GeometryError(SceneRegError):
    """Base class for mesh related failures"""


class EmptyMesh(GeometryError):
    """Mesh has no faces"""

    exit_code = EXIT_DATA_FORMAT


class DegenerateMesh(GeometryError):
    """Mesh geometry cannot support the requested operation"""


# Registration / alignment -------------------------------------------------


class RegistrationError(SceneRegError):
    """Base class for object-to-scene registration failures"""


class Diverged(RegistrationError):
    """Solver could not find an acceptable pose"""


class DegenerateInput(RegistrationError):
    """Residuals collapse onto a single point of the scene"""


class AllWeightsZero(RegistrationError):
    """No sample passes the normal-consistency gate"""


class DegenerateConfiguration(SceneRegError):
    """Point correspondences do not determine a similarity transform"""


# Metrics ------------------------------------------------------------------


class MetricError(SceneRegError):
    """Base class for evaluation failures"""


class NoValidPixels(MetricError):
    """No pixel is covered by both the registered objects and the scan"""

    exit_code = EXIT_METRIC


class EmptySet(MetricError):
    """A point set that must be non-empty is empty"""


class LengthMismatch(MetricError):
    """Matched per-object lists differ in length"""


# Decoder ------------------------------------------------------------------


class DecoderError(SceneRegError):
    """Base class for multi-object decoder failures"""


class ShapeMismatch(DecoderError):
    """Tensor dimensions are inconsistent"""

    exit_code = EXIT_DATA_FORMAT


class ScaleNonPositive(DecoderError):
    """Residual drives the isotropic scale to a non-positive value"""


class QuaternionDegenerate(DecoderError):
    """Residual cancels the rotation quaternion"""


# Scene generation ---------------------------------------------------------


class SceneGenError(SceneRegError):
    """Base class for synthetic scene generation failures"""


class PlacementExhausted(SceneGenError):
    """Too many rejected placements"""


class NoCompatiblePair(SceneGenError):
    """No catalog entry satisfies the stacking or nesting rule"""


class GenerationFailed(SceneGenError):
    """Generated scene never passed the physical-consistency gate"""
