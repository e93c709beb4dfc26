"""Records shared by the time-marching and LCHS emulators.

Block encodings are never materialised: a block is carried as the matrix it
encodes, its normalisation factor and the error injected into it. Output
states carry the unnormalised vector the algorithm's good branch would hold,
together with the normalisation that fixes its success amplitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSolutionError

SCENARIOS = ("final_homo", "final_inhomo", "history_homo", "history_inhomo")
CONVENTION = "unit O-constants, natural logarithms, log arguments floored at e"


@dataclass
class ErrorBudget:
    eps_tol: float
    eps_all: float = 0.0
    eps_0: float = 0.0
    eps_a: float = 0.0
    eps_int: float = 0.0
    eps_truncate: float = 0.0
    Q: float = 1.0
    extra: dict = field(default_factory=dict)


@dataclass
class StepBlock:
    matrix: np.ndarray
    alpha: float
    eps_inject: float
    reference: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.eps_inject < 0:
            raise ValueError("eps_inject must be non-negative")


@dataclass
class ResourceReport:
    ham_t_queries: float
    state_prep_queries: float
    aa_rounds: float
    scenario: str
    params_echo: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)
    convention: str = CONVENTION

    def __post_init__(self):
        for name in ("ham_t_queries", "state_prep_queries", "aa_rounds"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class EmulatedState:
    vector: np.ndarray
    norm_factor: float
    budget: ErrorBudget
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.norm_factor > 0:
            raise DegenerateSolutionError("norm_factor must be positive")

    @property
    def success_amp(self) -> float:
        return float(np.linalg.norm(self.vector) / self.norm_factor)

    @property
    def normalized(self) -> np.ndarray:
        n = np.linalg.norm(self.vector)
        if n == 0 or not np.isfinite(n):
            raise DegenerateSolutionError("emulated state has zero norm")
        return self.vector / n


def fidelity(psi: np.ndarray, phi: np.ndarray) -> float:
    """|<psi|phi>|^2 of the normalised vectors."""
    a = np.asarray(psi).reshape(-1)
    b = np.asarray(phi).reshape(-1)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateSolutionError("fidelity of a zero vector")
    return float(abs(np.vdot(a, b)) ** 2 / (na * na * nb * nb))


def random_perturbation(dim: int, norm: float, rng: np.random.Generator) -> np.ndarray:
    """Random complex matrix of spectral norm exactly ``norm``."""
    if norm == 0:
        return np.zeros((dim, dim), dtype=np.complex128)
    X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return norm * X / np.linalg.norm(X, 2)


def random_vector_perturbation(dim: int, norm: float, rng: np.random.Generator) -> np.ndarray:
    if norm == 0:
        return np.zeros(dim, dtype=np.complex128)
    x = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return norm * x / np.linalg.norm(x)


def lg(x: float) -> float:
    """Natural log with its argument floored at e (so lg >= 1)."""
    return math.log(max(math.e, x))


def llg(x: float) -> float:
    """lg(lg(x)), floored the same way so it stays >= 1."""
    return lg(lg(x))
