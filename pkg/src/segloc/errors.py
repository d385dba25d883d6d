"""Exception hierarchy shared across the library."""


class SeglocError(Exception):
    """Base class for all library errors."""


class EmptyCloud(SeglocError):
    """An operation that requires points received an empty cloud."""


class NotSymmetric(SeglocError):
    """Matrix handed to the symmetric eigen-solver is not symmetric."""


class DegenerateSegment(SeglocError):
    """Segment geometry is too degenerate for the requested operation."""


class DegenerateHull(SeglocError):
    """Convex hull is flat or has too few affinely independent points."""


class DegenerateConfiguration(SeglocError):
    """Correspondence set is collinear/degenerate; no unique rigid fit."""


class EmptyOriginal(SeglocError):
    """Reconstruction metric received an original grid with no occupancy."""


class DegenerateLabels(SeglocError):
    """A labeled dataset collapsed to a single class."""


class WeightsFormatError(SeglocError):
    """Weights container violates the binary format.

    ``code`` is one of: bad_magic, bad_version, truncated, bad_checksum,
    missing_tensor, shape_mismatch, unknown_architecture.
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class InvalidWeights(SeglocError):
    """Weights contain non-finite values."""


class ScanFormatError(SeglocError):
    """Scan file is malformed; carries the offending line or byte offset."""

    def __init__(self, message: str, line: int | None = None, offset: int | None = None):
        loc = f" (line {line})" if line is not None else ""
        loc = loc or (f" (byte offset {offset})" if offset is not None else "")
        super().__init__(message + loc)
        self.line = line
        self.offset = offset


class PoseFormatError(SeglocError):
    """Pose file line does not hold 12 floats."""

    def __init__(self, message: str, line: int):
        super().__init__(f"{message} (line {line})")
        self.line = line


class DuplicateNode(SeglocError):
    """A (robot, index) node key was added twice."""


class MissingNode(SeglocError):
    """A factor references a node that does not exist."""


class GaugeError(SeglocError):
    """A connected component of the graph has no prior anchoring it."""


class NonSPDInformation(SeglocError):
    """Factor information matrix is not symmetric positive-definite."""


class ConfigError(SeglocError):
    """Pipeline configuration is invalid; names the offending key."""
