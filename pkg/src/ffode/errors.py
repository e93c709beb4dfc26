"""Exception hierarchy shared by every module."""

from __future__ import annotations


class FFODEError(Exception):
    """Base class for all package errors."""


class ConvergenceError(FFODEError):
    """A refinement loop exhausted its depth without meeting tolerance."""

    def __init__(self, message: str, distance: float = float("nan")):
        super().__init__(message)
        self.distance = distance


class DegenerateSolutionError(FFODEError):
    """A state to be normalised has zero (or numerically zero) norm."""


class PreconditionError(FFODEError):
    """An input violates a documented precondition (e.g. not dissipative)."""


class StepSizeError(FFODEError):
    """A step is too long for the requested block encoding or series."""


class ConfigError(FFODEError):
    """An experiment configuration is malformed."""


class ToleranceFailure(FFODEError):
    """An experiment finished but missed its stated tolerance."""
