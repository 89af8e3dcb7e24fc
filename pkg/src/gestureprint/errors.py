"""Exception hierarchy.

``ValidationError`` subclasses describe bad inputs (CLI exit code 1);
everything else derived from ``GesturePrintError`` is a runtime failure
(CLI exit code 2).
"""


class GesturePrintError(Exception):
    pass


class ValidationError(GesturePrintError, ValueError):
    pass


class EmptyCloud(ValidationError):
    pass


class NonPositiveVoxel(ValidationError):
    pass


class EmptyCollection(ValidationError):
    pass


class NoValidPairs(ValidationError):
    pass


class EmptyHistory(ValidationError):
    pass


class StreamTooShort(ValidationError):
    pass


class SegmentOutOfRange(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class LabelOutOfRange(ValidationError):
    pass


class TraceMismatch(ValidationError):
    pass


class ClassTooSmall(ValidationError):
    pass


class EmptyDataset(ValidationError):
    pass


class EmptyCell(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class EmptyList(ValidationError):
    pass


class EmptyPool(ValidationError):
    pass


class BadSchedule(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NonMonotoneFrames(ValidationError):
    pass


class VersionMismatch(ValidationError):
    pass


class NoCluster(GesturePrintError):
    """Denoising found no cluster with at least ``n_min`` points."""


class NonFiniteActivation(GesturePrintError):
    pass


class DivergenceDetected(GesturePrintError):
    pass
