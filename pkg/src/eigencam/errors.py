"""Exception hierarchy.

Errors fall into three families, which the command line maps to exit codes:
usage errors (2), format / I/O errors (3) and numeric errors (4).
"""


class EigenCamError(Exception):
    """Base class for every error raised by this package."""


class UsageError(EigenCamError, ValueError):
    pass


class FormatError(EigenCamError, ValueError):
    pass


class NumericError(EigenCamError, ArithmeticError):
    pass


# numeric

class DegenerateInput(NumericError):
    """The matrix handed to the SVD routines is entirely zero."""


class DegenerateActivations(NumericError):
    """The feature map is entirely zero, so no principal direction exists."""


class NoConvergence(NumericError):
    def __init__(self, message, last_iterate=None, iterations=0):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations


# usage / contract

class DimensionMismatch(UsageError):
    pass


class ThresholdOutOfRange(UsageError):
    pass


class EmptyMask(UsageError):
    pass


class EmptyDataset(UsageError):
    pass


class MissingClassificationFlag(UsageError):
    pass


class TapNotFeatureMap(UsageError):
    pass


class NoClassifierHead(UsageError):
    pass


# formats, models, files

class LengthMismatch(FormatError):
    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class ShapeMismatch(FormatError):
    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class BadMagic(FormatError):
    def __init__(self, message, offset=0):
        super().__init__(message)
        self.offset = offset


class UnsupportedVersion(FormatError):
    def __init__(self, message, offset=4):
        super().__init__(message)
        self.offset = offset


class UnsupportedDtype(FormatError):
    def __init__(self, message, offset=5):
        super().__init__(message)
        self.offset = offset


class BadDims(FormatError):
    """Rank outside 1..4 or a zero-length dimension in an FMAP header."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class NonFiniteData(FormatError):
    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class UnsupportedFormat(FormatError):
    pass


class CorruptHeader(FormatError):
    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class TruncatedPayload(FormatError):
    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class ParseError(FormatError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class BoxOutOfBounds(FormatError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class MissingWeightFile(FormatError):
    def __init__(self, message, name=None):
        super().__init__(message)
        self.name = name
