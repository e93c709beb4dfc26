"""Classical emulation and resource estimation for fast-forwarded quantum
ODE solvers (time-marching and linear combination of Hamiltonian simulation)."""

from __future__ import annotations

from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateSolutionError,
    FFODEError,
    PreconditionError,
    StepSizeError,
    ToleranceFailure,
)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "ConvergenceError",
    "DegenerateSolutionError",
    "FFODEError",
    "PreconditionError",
    "StepSizeError",
    "ToleranceFailure",
]
