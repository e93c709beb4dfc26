"""Problem generators for two dissipative applications.

* Non-Hermitian quantum dynamics ``i du/dt = (H(t) + i L(t)) u`` with
  ``L(t) <= -2 eta``, i.e. ``du/dt = (L - iH) u``.
* Finite-difference reaction-diffusion on ``[0, 1]^d`` with Dirichlet
  boundaries and ``(N - 1)^d`` interior points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, PreconditionError
from .linalg import (
    HERMITIAN_TOL,
    ODEProblem,
    function_generator,
    make_problem,
    random_hermitian,
    term_generator,
)

CoefFn = Callable[[np.ndarray], np.ndarray]
SourceFn = Callable[[float, np.ndarray], np.ndarray]

DEFAULT_DIM_CAP = 1024
CHECK_SAMPLES = 64


# ---------------------------------------------------------------------------
# coefficient presets


def coefficient_preset(name: str, **params) -> CoefFn:
    """Vectorised scalar coefficient t -> value from a named recipe.

    ``constant``: value. ``linear-ramp``: start + slope * t.
    ``sinusoidal``: mean + amplitude * sin(omega * t + phase).
    """
    def arr(ts):
        return np.asarray(ts, dtype=np.float64)

    try:
        if name == "constant":
            v = float(params.get("value", 1.0))
            return lambda ts: np.full(arr(ts).shape, v)
        if name == "linear-ramp":
            s0, k = float(params.get("start", 1.0)), float(params.get("slope", 0.0))
            return lambda ts: s0 + k * arr(ts)
        if name == "sinusoidal":
            m = float(params.get("mean", 1.0))
            amp = float(params.get("amplitude", 0.5))
            w = float(params.get("omega", 1.0))
            ph = float(params.get("phase", 0.0))
            return lambda ts: m + amp * np.sin(w * arr(ts) + ph)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameters for coefficient preset {name!r}: {exc}") from exc
    raise ConfigError(f"unknown coefficient preset {name!r}; "
                      "expected 'constant', 'linear-ramp' or 'sinusoidal'")


def as_coefficient(spec) -> CoefFn:
    """Accept a number, a callable, or a ``{"preset": name, ...}`` mapping."""
    if callable(spec):
        return spec
    if isinstance(spec, (int, float)):
        return coefficient_preset("constant", value=float(spec))
    if isinstance(spec, dict):
        params = dict(spec)
        name = params.pop("preset", None)
        if name is None:
            raise ConfigError("coefficient mapping needs a 'preset' key")
        return coefficient_preset(name, **params)
    raise ConfigError(f"cannot interpret coefficient {spec!r}")


# ---------------------------------------------------------------------------
# non-Hermitian dynamics


@dataclass(frozen=True)
class NonHermitianSpec:
    L_builder: Callable[[float], np.ndarray]
    H_builder: Callable[[float], np.ndarray]
    eta: float
    label: str = "non-hermitian"

    def check(self, T: float, samples: int = CHECK_SAMPLES) -> int:
        """Validate Hermiticity and L(t) <= -2 eta on samples of [0, T]; returns dim."""
        if not self.eta > 0:
            raise PreconditionError("NonHermitianSpec.eta must be positive")
        dim = None
        for t in np.linspace(0.0, T, samples):
            L = np.asarray(self.L_builder(float(t)), dtype=np.complex128)
            H = np.asarray(self.H_builder(float(t)), dtype=np.complex128)
            if L.shape != H.shape or L.ndim != 2 or L.shape[0] != L.shape[1]:
                raise PreconditionError("L(t) and H(t) must be square matrices of one shape")
            dim = L.shape[0]
            for name, M in (("L", L), ("H", H)):
                if np.max(np.abs(M - M.conj().T)) > HERMITIAN_TOL * max(1.0, np.max(np.abs(M))):
                    raise PreconditionError(f"{name}({t:.6g}) is not Hermitian")
            top = float(np.linalg.eigvalsh(L)[-1])
            if top > -2.0 * self.eta + 1e-9:
                raise PreconditionError(
                    f"L({t:.6g}) has eigenvalue {top:.6g} above -2*eta = {-2 * self.eta:.6g}")
        return int(dim)


def build_non_hermitian(spec: NonHermitianSpec, u0, T: float, *,
                        samples: int = CHECK_SAMPLES) -> ODEProblem:
    """du/dt = (L(t) - i H(t)) u with b = 0.

    Since A + A^dagger = 2L <= -4 eta_spec, the problem carries
    ``eta = 2 * spec.eta``; both values are recorded in ``meta``.
    """
    dim = spec.check(T, samples)

    def A(t: float) -> np.ndarray:
        return (np.asarray(spec.L_builder(t), dtype=np.complex128)
                - 1j * np.asarray(spec.H_builder(t), dtype=np.complex128))

    gen = function_generator(A, dim, t_range=(0.0, T), label=spec.label)
    return make_problem(gen, u0, T, eta=2.0 * spec.eta, label=spec.label,
                        meta={"application": "non-hermitian", "eta_spec": spec.eta,
                              "eta_problem": 2.0 * spec.eta})


def constant_non_hermitian(L: np.ndarray, H: np.ndarray, eta: float | None = None,
                           label: str = "non-hermitian") -> NonHermitianSpec:
    """Spec with time-independent L and H; eta defaults to -lambda_max(L)/2."""
    L = np.array(L, dtype=np.complex128)
    H = np.array(H, dtype=np.complex128)
    if eta is None:
        eta = -0.5 * float(np.linalg.eigvalsh(L)[-1])
    return NonHermitianSpec(lambda t: L, lambda t: H, float(eta), label)


def random_non_hermitian(dim: int, rng: np.random.Generator, *, eta: float = 0.5,
                         omega: float = 1.0) -> NonHermitianSpec:
    """Random smooth spec: L(t) = -2 eta I - s(t) P with P >= 0, H(t) = H0 + cos(omega t) H1."""
    X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    P = X @ X.conj().T
    P = 0.5 * P / np.linalg.norm(P, 2)
    H0, H1 = random_hermitian(dim, rng), random_hermitian(dim, rng, 0.5)
    ph = float(rng.uniform(0, 2 * np.pi))
    eye = np.eye(dim)

    def L(t):
        return -2.0 * eta * eye - 0.5 * (1.0 + math.sin(omega * t + ph)) * P

    def H(t):
        return H0 + math.cos(omega * t) * H1

    return NonHermitianSpec(L, H, eta, "random-non-hermitian")


# ---------------------------------------------------------------------------
# reaction-diffusion


def laplacian_1d(N: int) -> np.ndarray:
    """Tridiagonal (1, -2, 1) on N - 1 interior points."""
    n = N - 1
    return -2.0 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1)


def difference_1d(N: int) -> np.ndarray:
    """Antisymmetric (-1, 0, 1) centred difference on N - 1 interior points."""
    n = N - 1
    return np.eye(n, k=1) - np.eye(n, k=-1)


def laplacian_eigenvalues(N: int) -> np.ndarray:
    """-4 sin^2(k pi / 2N), k = 1 .. N - 1 (ascending in k, descending in value)."""
    k = np.arange(1, N)
    return -4.0 * np.sin(k * np.pi / (2 * N)) ** 2


def embed(op: np.ndarray, j: int, d: int) -> np.ndarray:
    """I^(j) (x) op (x) I^(d - j - 1) for a zero-based axis j."""
    n = op.shape[0]
    out = np.ones((1, 1))
    for axis in range(d):
        out = np.kron(out, op if axis == j else np.eye(n))
    return out


class EtaBound(NamedTuple):
    rigorous: float
    asymptotic: float

    @property
    def dissipative(self) -> bool:
        return self.rigorous > 0


def rd_eta_bound(N: int, a_star: float) -> EtaBound:
    """(4 N^2 sin^2(pi / 2N) a_star, pi^2 a_star).

    The first is the tight rate of the discrete operator; it increases to the
    second as N grows and lies in [4 a_star, pi^2 a_star].
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    if a_star < 0:
        raise ValueError("a_star must be non-negative")
    return EtaBound(4.0 * N * N * math.sin(math.pi / (2 * N)) ** 2 * a_star,
                    math.pi ** 2 * a_star)


@dataclass(frozen=True)
class ReactionDiffusionSpec:
    d: int
    N: int
    a: Sequence[CoefFn]
    c: Sequence[CoefFn]
    a_star: float
    f: SourceFn | None = None
    label: str = "reaction-diffusion"
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return (self.N - 1) ** self.d

    def grid(self) -> np.ndarray:
        """Interior points (k_1/N, ..., k_d/N) in kron order, shape (dim, d)."""
        x = np.arange(1, self.N) / self.N
        mesh = np.meshgrid(*([x] * self.d), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def check(self, T: float, samples: int = CHECK_SAMPLES) -> int:
        """Validate shapes, a_j >= 0 and some a_j0 >= a_star on samples; returns j0."""
        if self.d < 1 or self.N < 2:
            raise ConfigError("reaction-diffusion needs d >= 1 and N >= 2")
        if len(self.a) != self.d or len(self.c) != self.d:
            raise ConfigError(f"need {self.d} diffusion and {self.d} advection coefficients")
        if not self.a_star > 0:
            raise PreconditionError("a_star must be positive for a dissipative problem")
        ts = np.linspace(0.0, T, samples)
        vals = np.array([np.broadcast_to(np.asarray(a(ts), dtype=np.float64), ts.shape)
                         for a in self.a])
        if np.min(vals) < 0:
            raise PreconditionError("diffusion coefficients must be non-negative")
        ok = np.flatnonzero(np.min(vals, axis=1) >= self.a_star)
        if ok.size == 0:
            raise PreconditionError(f"no diffusion coefficient stays above a_star = {self.a_star}")
        return int(ok[0])


def make_reaction_diffusion(d: int, N: int, a, c=0.0, a_star: float | None = None,
                            f: SourceFn | float | None = None,
                            label: str = "reaction-diffusion") -> ReactionDiffusionSpec:
    """Spec from numbers, callables or preset mappings; scalars broadcast over axes.

    ``a_star`` defaults to the smallest sampled value of the first diffusion
    coefficient on [0, 1].
    """
    a_list = list(a) if isinstance(a, (list, tuple)) else [a] * d
    c_list = list(c) if isinstance(c, (list, tuple)) else [c] * d
    a_fns = tuple(as_coefficient(v) for v in a_list)
    c_fns = tuple(as_coefficient(v) for v in c_list)
    if a_star is None:
        a_star = float(np.min(a_fns[0](np.linspace(0.0, 1.0, CHECK_SAMPLES))))
    if isinstance(f, (int, float)):
        val = float(f)
        f = (lambda t, X: np.full(X.shape[0], val)) if val != 0 else None
    return ReactionDiffusionSpec(d=d, N=N, a=a_fns, c=c_fns, a_star=float(a_star), f=f,
                                 label=label, params={"a": a_list, "c": c_list})


def build_reaction_diffusion(spec: ReactionDiffusionSpec, T: float, u0=None, *,
                             dim_cap: int = DEFAULT_DIM_CAP) -> ODEProblem:
    """Semi-discretised ODE du/dt = L(t) u + i H(t) u + f(t).

    L(t) = N^2 sum_j a_j(t) D_j and H(t) = -(i/2) N sum_j c_j(t) G_j, so
    A = L + iH = N^2 sum_j a_j D_j + (N/2) sum_j c_j G_j. The problem's eta is
    the rigorous finite-N rate; the continuum value is kept in ``meta``.
    ``u0`` may be a vector, a callable of the (dim, d) grid, or None (ones).
    """
    if spec.dim > dim_cap:
        raise ConfigError(f"(N-1)^d = {spec.dim} exceeds the dimension cap {dim_cap}")
    j0 = spec.check(T)
    D, G = laplacian_1d(spec.N), difference_1d(spec.N)
    N, d = spec.N, spec.d
    coefs: list[CoefFn] = []
    mats: list[np.ndarray] = []
    for j in range(d):
        coefs.append(spec.a[j])
        mats.append(N * N * embed(D, j, d))
        coefs.append(spec.c[j])
        mats.append(0.5 * N * embed(G, j, d))
    gen = term_generator(coefs, mats, t_range=(0.0, T), label=spec.label)
    X = spec.grid()
    if u0 is None:
        u0 = np.ones(spec.dim)
    elif callable(u0):
        u0 = np.asarray(u0(X), dtype=np.float64)
    b_vec = None
    if spec.f is not None:
        src = spec.f

        def source_samples(ts):
            ts = np.atleast_1d(np.asarray(ts, dtype=np.float64))
            return np.stack([np.asarray(src(float(t), X), dtype=np.float64) for t in ts])

        b_vec = source_samples

    bound = rd_eta_bound(N, spec.a_star)
    return make_problem(gen, u0, T, b_vec=b_vec, eta=bound.rigorous, label=spec.label,
                        meta={"application": "reaction-diffusion", "d": d, "N": N,
                              "a_star": spec.a_star, "j0": j0,
                              "eta_rigorous": bound.rigorous,
                              "eta_asymptotic": bound.asymptotic})


def rd_operators(spec: ReactionDiffusionSpec, t: float) -> tuple[np.ndarray, np.ndarray]:
    """(L(t), H(t)) exactly as assembled by the builder, both Hermitian."""
    D, G = laplacian_1d(spec.N), difference_1d(spec.N)
    n = spec.dim
    L = np.zeros((n, n))
    H = np.zeros((n, n), dtype=np.complex128)
    ts = np.array([float(t)])
    for j in range(spec.d):
        L += spec.N ** 2 * float(spec.a[j](ts)[0]) * embed(D, j, spec.d)
        H += -0.5j * spec.N * float(spec.c[j](ts)[0]) * embed(G, j, spec.d)
    return L, H
