"""Provides exceptions for ckav usage."""


class CkavError(Exception):
    """Base class for errors raised by ckav."""

    pass


class CheckpointFormatError(CkavError):
    """Raised when a checkpoint container cannot be read or written."""

    pass


class CompatibilityError(CkavError):
    """Raised when tensor names or shapes do not line up."""

    pass


class SelectionUsageError(CkavError):
    """Raised when selection strategies are used incorrectly."""

    pass


class AveragingUsageError(CkavError):
    """Raised when averaging methods are used incorrectly."""

    pass


class OptimizerUsageError(CkavError):
    """Raised when the interpolation weight optimizer is used incorrectly."""

    pass


class SweepUsageError(CkavError):
    """Raised when sweep methods are used incorrectly."""

    pass
