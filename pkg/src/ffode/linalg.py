"""Dense complex linear algebra and the reference propagator oracle.

Everything downstream (time-marching and LCHS emulation, planners, the
harness) is judged against :func:`propagate_reference` and
:func:`solve_reference`, which integrate with classical RK4 inside a
step-doubling loop until two successive refinements agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import kernels
from .errors import ConvergenceError, DegenerateSolutionError, PreconditionError

MatrixFn = Callable[[float], np.ndarray]
VectorFn = Callable[[float], np.ndarray]
CoefFn = Callable[[np.ndarray], np.ndarray]

ESTIMATE_SAMPLES = 1024
HERMITIAN_TOL = 1e-12
SAMPLE_BUDGET = 1 << 23  # complex entries per sampled block (128 MiB)


# ---------------------------------------------------------------------------
# small helpers


def opnorm(M: np.ndarray) -> float:
    """Spectral norm (largest singular value)."""
    M = np.asarray(M)
    if M.ndim == 1:
        return float(np.linalg.norm(M))
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def expm_dense(M: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring with Pade approximants."""
    M = np.asarray(M, dtype=np.complex128)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expm_dense needs a square matrix")
    return scipy.linalg.expm(M)


def hermitian_part(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)


def cartesian_split(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(L, H)`` with ``M = L + iH`` and both Hermitian."""
    M = np.asarray(M, dtype=np.complex128)
    L = 0.5 * (M + M.conj().T)
    H = (M - M.conj().T) / 2j
    return L, H


def spectral_abscissa(M: np.ndarray) -> float:
    """Largest eigenvalue of the Hermitian part ``(M + M^dagger)/2``."""
    M = np.asarray(M, dtype=np.complex128)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("spectral_abscissa needs a square matrix")
    return float(np.linalg.eigvalsh(hermitian_part(M))[-1])


def normalize(v: np.ndarray, floor: float = 1e-300) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if not np.isfinite(n) or n <= floor:
        raise DegenerateSolutionError(f"cannot normalise vector of norm {n:.3e}")
    return v / n


# ---------------------------------------------------------------------------
# generator and problem types


@dataclass(frozen=True)
class TimeGenerator:
    """The coefficient matrix A(t) of du/dt = A(t)u + b(t).

    ``terms`` optionally describes A(t) = sum_i f_i(t) A_i with vectorised
    coefficient functions, which makes dense time sampling cheap.
    ``breakpoints`` lists times where A may jump; integrators never step
    across them.
    """

    dim: int
    func: MatrixFn
    alpha_A: float
    alpha_estimated: bool = False
    smoothness_hint: float | None = None
    constant: bool = False
    terms: tuple | None = None
    breakpoints: tuple[float, ...] = ()
    zero_after: float | None = None
    sampler: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = "custom"

    def eval(self, t: float) -> np.ndarray:
        return np.asarray(self.func(float(t)), dtype=np.complex128)

    def eval_L(self, t: float) -> np.ndarray:
        return cartesian_split(self.eval(t))[0]

    def eval_H(self, t: float) -> np.ndarray:
        return cartesian_split(self.eval(t))[1]

    def samples(self, ts: np.ndarray) -> np.ndarray:
        """A(t) stacked over ``ts`` into shape ``(len(ts), dim, dim)``."""
        ts = np.asarray(ts, dtype=np.float64)
        if self.constant:
            A = self.eval(0.0)
            return np.broadcast_to(A, (ts.size, self.dim, self.dim)).copy()
        if self.sampler is not None:
            return np.asarray(self.sampler(ts), dtype=np.complex128)
        if self.terms is not None:
            out = np.zeros((ts.size, self.dim, self.dim), dtype=np.complex128)
            for coef, mat in self.terms:
                c = np.asarray(coef(ts), dtype=np.complex128)
                out += c[:, None, None] * mat[None, :, :]
            return out
        out = np.empty((ts.size, self.dim, self.dim), dtype=np.complex128)
        for i, t in enumerate(ts):
            out[i] = self.eval(t)
        return out

    def split_samples(self, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        S = self.samples(ts)
        Sh = np.conj(np.swapaxes(S, 1, 2))
        return 0.5 * (S + Sh), (S - Sh) / 2j

    def alpha_L(self, t_range: tuple[float, float] = (0.0, 1.0),
                n: int = ESTIMATE_SAMPLES) -> float:
        """max_t ||L(t)|| over uniform samples."""
        ts = np.linspace(t_range[0], t_range[1], n if not self.constant else 1)
        Ls, _ = self.split_samples(ts)
        return max(float(np.max(np.abs(np.linalg.eigvalsh(Ls)))), 0.0)

    def padded(self, T: float) -> "TimeGenerator":
        """Same generator on [., T] and identically zero afterwards."""
        base = self.func
        zero = np.zeros((self.dim, self.dim), dtype=np.complex128)

        def func(t: float) -> np.ndarray:
            return base(t) if t <= T else zero

        terms = None
        if self.terms is not None:
            terms = tuple(
                ((lambda ts, c=c: np.where(np.asarray(ts) <= T, c(ts), 0.0)), m)
                for c, m in self.terms
            )
        if self.constant:
            A = self.eval(0.0)
            terms = (((lambda ts: np.where(np.asarray(ts) <= T, 1.0, 0.0)), A),)
        sampler = None
        if self.sampler is not None:
            base_s = self.sampler

            def cut_sampler(ts):
                ts = np.asarray(ts, dtype=np.float64)
                return base_s(ts) * (ts <= T)[:, None, None]

            sampler = cut_sampler
        return replace(self, func=func, terms=terms, constant=False, sampler=sampler,
                       breakpoints=tuple(sorted(set(self.breakpoints) | {float(T)})),
                       zero_after=float(T) if self.zero_after is None else min(T, self.zero_after),
                       label=self.label + "+pad")


def _estimate_alpha(gen_samples: np.ndarray) -> float:
    return max(float(np.max(np.linalg.norm(gen_samples, ord=2, axis=(1, 2)))), 0.0)


def constant_generator(A: np.ndarray, label: str = "constant") -> TimeGenerator:
    A = np.array(A, dtype=np.complex128)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    return TimeGenerator(dim=A.shape[0], func=lambda t, A=A: A, alpha_A=opnorm(A),
                         constant=True, label=label)


def term_generator(coefs: Sequence[CoefFn], mats: Sequence[np.ndarray],
                   alpha_A: float | None = None, t_range: tuple[float, float] = (0.0, 1.0),
                   smoothness_hint: float | None = None,
                   label: str = "terms") -> TimeGenerator:
    """A(t) = sum_i coefs[i](t) * mats[i] with vectorised coefficient functions."""
    mats = [np.array(m, dtype=np.complex128) for m in mats]
    terms = tuple(zip(coefs, mats))

    def func(t: float) -> np.ndarray:
        return sum(complex(np.asarray(c(np.array([t])))[0]) * m for c, m in terms)

    gen = TimeGenerator(dim=mats[0].shape[0], func=func, alpha_A=0.0, terms=terms,
                        smoothness_hint=smoothness_hint, label=label)
    if alpha_A is None:
        ts = np.linspace(t_range[0], t_range[1], ESTIMATE_SAMPLES)
        return replace(gen, alpha_A=_estimate_alpha(gen.samples(ts)), alpha_estimated=True)
    return replace(gen, alpha_A=float(alpha_A))


def function_generator(func: MatrixFn, dim: int, alpha_A: float | None = None,
                       t_range: tuple[float, float] = (0.0, 1.0),
                       smoothness_hint: float | None = None,
                       label: str = "function") -> TimeGenerator:
    gen = TimeGenerator(dim=dim, func=func, alpha_A=0.0, smoothness_hint=smoothness_hint,
                        label=label)
    if alpha_A is None:
        ts = np.linspace(t_range[0], t_range[1], ESTIMATE_SAMPLES)
        return replace(gen, alpha_A=_estimate_alpha(gen.samples(ts)), alpha_estimated=True)
    return replace(gen, alpha_A=float(alpha_A))


@dataclass(frozen=True)
class ODEProblem:
    """du/dt = A(t)u + b(t), u(0) = u0 on [0, T]."""

    gen: TimeGenerator
    u0: np.ndarray
    T: float
    b: VectorFn | None = None
    b_vec: Callable[[np.ndarray], np.ndarray] | None = None
    eta: float | None = None
    b_max: float = 0.0
    b_L1: float = 0.0
    b_estimated: bool = False
    label: str = "problem"
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.gen.dim

    @property
    def homogeneous(self) -> bool:
        return self.b is None and self.b_vec is None

    @property
    def u0_norm(self) -> float:
        return float(np.linalg.norm(self.u0))

    def b_eval(self, t: float) -> np.ndarray:
        if self.b_vec is not None:
            return np.asarray(self.b_vec(np.array([float(t)])), dtype=np.complex128)[0]
        if self.b is None:
            return np.zeros(self.dim, dtype=np.complex128)
        return np.asarray(self.b(float(t)), dtype=np.complex128).reshape(self.dim)

    def b_samples(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=np.float64)
        if self.b_vec is not None:
            return np.asarray(self.b_vec(ts), dtype=np.complex128).reshape(ts.size, self.dim)
        if self.b is None:
            return np.zeros((ts.size, self.dim), dtype=np.complex128)
        return np.array([self.b_eval(t) for t in ts], dtype=np.complex128).reshape(ts.size, self.dim)

    def with_T(self, T: float) -> "ODEProblem":
        """Same problem on a new horizon; b norms are re-estimated if they were estimated."""
        p = replace(self, T=float(T))
        if not self.homogeneous and self.b_estimated:
            bm, bl = _estimate_b_norms(p, float(T))
            p = replace(p, b_max=bm, b_L1=bl)
        return p


def _estimate_b_norms(problem: ODEProblem, T: float) -> tuple[float, float]:
    ts = np.linspace(0.0, T, ESTIMATE_SAMPLES)
    nb = np.linalg.norm(problem.b_samples(ts), axis=1)
    return float(nb.max()), float(np.trapezoid(nb, ts))


def make_problem(gen: TimeGenerator, u0, T: float, b: VectorFn | None = None, *,
                 b_vec: Callable[[np.ndarray], np.ndarray] | None = None,
                 eta: float | None = None, b_max: float | None = None,
                 b_L1: float | None = None, check_eta: bool = True,
                 label: str = "problem", meta: dict | None = None) -> ODEProblem:
    """Build an :class:`ODEProblem`, estimating b norms by sampling when not supplied.

    When ``eta`` is given it is verified on 1024 samples of [0, T]
    (A + A^dagger <= -2 eta up to 1e-9), raising :class:`PreconditionError`
    otherwise.
    """
    u0 = np.array(u0, dtype=np.complex128).reshape(-1)
    if u0.shape[0] != gen.dim:
        raise ValueError(f"u0 has dimension {u0.shape[0]}, generator {gen.dim}")
    if T <= 0:
        raise ValueError("T must be positive")
    if gen.alpha_estimated and not gen.constant:
        ts = np.linspace(0.0, T, ESTIMATE_SAMPLES)
        gen = replace(gen, alpha_A=max(gen.alpha_A, _estimate_alpha(gen.samples(ts))))
    p = ODEProblem(gen=gen, u0=u0, T=float(T), b=b, b_vec=b_vec, eta=eta, label=label,
                   meta=dict(meta or {}))
    if not p.homogeneous:
        est = b_max is None or b_L1 is None
        bm, bl = _estimate_b_norms(p, T) if est else (0.0, 0.0)
        p = replace(p, b_max=float(bm if b_max is None else b_max),
                    b_L1=float(bl if b_L1 is None else b_L1), b_estimated=est)
        if p.b_samples(np.array([0.0])).shape != (1, gen.dim):
            raise ValueError("b(t) has the wrong dimension")
    if eta is not None and check_eta:
        if eta <= 0:
            raise PreconditionError("eta must be positive")
        ts = np.linspace(0.0, T, 1 if gen.constant else ESTIMATE_SAMPLES)
        Ls, _ = gen.split_samples(ts)
        worst = float(np.max(np.linalg.eigvalsh(Ls)[:, -1]))
        if worst > -eta + 1e-9:
            raise PreconditionError(
                f"A + A^dagger <= -2*eta fails on samples: max abscissa {worst:.6g} > {-eta:.6g}")
    return p


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (len(times), dim)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    def history_vector(self) -> np.ndarray:
        """The stacked block vector of all states (unnormalised)."""
        return np.asarray(self.states).reshape(-1)


# ---------------------------------------------------------------------------
# reference integration


def _node_samples(t_nodes: np.ndarray, nudge: bool) -> np.ndarray:
    """Interleave node and midpoint times: t0, m0, t1, m1, ..., tn."""
    n = t_nodes.size - 1
    ts = np.empty(2 * n + 1)
    ts[0::2] = t_nodes
    ts[1::2] = 0.5 * (t_nodes[:-1] + t_nodes[1:])
    if nudge and n > 0:
        span = t_nodes[-1] - t_nodes[0]
        ts[0] += 1e-13 * span
        ts[-1] -= 1e-13 * span
    return ts


def _segments(t0: float, t1: float, cuts: Sequence[float]) -> list[tuple[float, float]]:
    pts = sorted({t0, t1, *[c for c in cuts if t0 < c < t1]})
    return [(a, b) for a, b in zip(pts[:-1], pts[1:]) if b > a]


def _initial_steps(alpha: float, span: float, tol: float) -> int:
    """A-priori RK4 step count from err ~ (alpha*span)*(alpha*h)^4/120."""
    if alpha * span == 0:
        return 1
    h = (120.0 * tol / max(alpha * span, 1e-300)) ** 0.25 / alpha
    return int(min(max(1, math.ceil(span / h)), 1 << 18))


def _rk4_matrix_interval(gen: TimeGenerator, t0: float, t1: float, n: int) -> np.ndarray:
    d = gen.dim
    Phi = np.eye(d, dtype=np.complex128)
    segs = _segments(t0, t1, gen.breakpoints)
    span = t1 - t0
    for a, b in segs:
        m = max(1, int(math.ceil(n * (b - a) / span)))
        nodes = np.linspace(a, b, m + 1)
        ts = _node_samples(nodes, bool(gen.breakpoints))
        hs = np.diff(nodes)
        for lo, hi in _blocks(m, d):
            Phi = kernels.rk4_matrix(gen.samples(ts[2 * lo:2 * hi + 1]), hs[lo:hi], Phi)
    return Phi


def _blocks(n_steps: int, d: int) -> list[tuple[int, int]]:
    """Step ranges [lo, hi) whose sample arrays stay below SAMPLE_BUDGET entries."""
    size = max(1, SAMPLE_BUDGET // (2 * d * d))
    return [(lo, min(lo + size, n_steps)) for lo in range(0, n_steps, size)]


def propagate_reference(gen: TimeGenerator, t0: float, t1: float, tol: float = 1e-10,
                        max_depth: int = 14) -> np.ndarray:
    """Propagator T exp(int_{t0}^{t1} A) to within ``tol`` in spectral norm.

    Constant generators use the matrix exponential directly. Otherwise RK4 is
    run on a uniform grid whose step count is doubled until two successive
    results agree within ``tol/2``; the finer one is returned.
    """
    if t1 < t0:
        raise ValueError("propagate_reference needs t0 <= t1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    d = gen.dim
    if t1 == t0:
        return np.eye(d, dtype=np.complex128)
    if gen.constant:
        return expm_dense(gen.eval(0.0) * (t1 - t0))
    alpha = max(gen.alpha_A, 1e-12)
    n = _initial_steps(alpha, t1 - t0, tol)
    prev = _rk4_matrix_interval(gen, t0, t1, n)
    dist = float("inf")
    for _ in range(max_depth):
        n *= 2
        cur = _rk4_matrix_interval(gen, t0, t1, n)
        dist = opnorm(cur - prev)
        if dist <= tol / 2:
            return cur
        prev = cur
    raise ConvergenceError(
        f"propagate_reference did not converge on [{t0}, {t1}] (last distance {dist:.3e})",
        distance=dist)


def propagate_vector_reference(gen: TimeGenerator, t0: float, t1: float, v: np.ndarray,
                               tol: float = 1e-10) -> np.ndarray:
    """Phi(t0, t1) v, integrating the vector ODE (cheaper than the full matrix)."""
    p = ODEProblem(gen=gen, u0=np.asarray(v, dtype=np.complex128), T=t1)
    return _march_reference(p, np.array([t0, t1]), tol, t_start=t0)[-1]


def march(sample_fn: Callable[[np.ndarray], np.ndarray], t_start: float, t_end: float,
          u_start: np.ndarray, h: float, *, c1: complex = 1.0, c2: complex = 0.0,
          sample_fn2: Callable[[np.ndarray], np.ndarray] | None = None,
          source_fn: Callable[[np.ndarray], np.ndarray] | None = None,
          cuts: Sequence[float] = (), impulse_times: Sequence[float] = (),
          impulse_vecs: np.ndarray | None = None, rec_times: Sequence[float] = ()
          ) -> tuple[np.ndarray, np.ndarray]:
    """One fixed-resolution RK4 march of du/dt = (c1 S1(t) + c2 S2(t)) u + s(t).

    The grid has steps no longer than ``h`` and contains every impulse and
    record time as a node. Impulses (sorted times with vectors) are added to
    the state at their node; records are taken after impulses at the same
    node. ``cuts`` are discontinuities: the march restarts there with
    one-sided samples.
    """
    d = np.asarray(u_start).shape[0]
    imp_t = np.asarray(impulse_times, dtype=np.float64)
    imp_v = (np.zeros((0, d), dtype=np.complex128) if impulse_vecs is None
             else np.asarray(impulse_vecs, dtype=np.complex128).reshape(-1, d))
    rec_t = np.asarray(rec_times, dtype=np.float64)
    if np.any(np.diff(imp_t) < 0) or np.any(np.diff(rec_t) < 0):
        raise ValueError("impulse and record times must be ascending")
    out = np.zeros((rec_t.size, d), dtype=np.complex128)
    u = np.array(u_start, dtype=np.complex128)
    cuts = sorted(c for c in cuts if t_start < c < t_end)
    segs = _segments(t_start, t_end, cuts) if t_end > t_start else [(t_start, t_start)]
    nudge = bool(cuts)
    for si, (a, b) in enumerate(segs):
        lo_ok = (lambda t: (t >= a) if si == 0 else (t > a))
        imask = np.array([lo_ok(t) and t <= b for t in imp_t], dtype=bool)
        rmask = np.array([lo_ok(t) and t <= b for t in rec_t], dtype=bool)
        pts = np.unique(np.concatenate([[a, b], imp_t[imask], rec_t[rmask]]))
        nodes = [pts[0]]
        for x, y in zip(pts[:-1], pts[1:]):
            m = max(1, int(math.ceil((y - x) / h - 1e-9)))
            nodes.extend(np.linspace(x, y, m + 1)[1:])
        nodes = np.asarray(nodes)
        nodes[-1] = pts[-1]
        add_at = np.searchsorted(nodes, imp_t[imask])
        rec_at = np.searchsorted(nodes, rec_t[rmask])
        n_steps = nodes.size - 1
        if n_steps == 0:
            u = u + imp_v[imask].sum(axis=0)
            out[rmask] = u
            continue
        ts = _node_samples(nodes, nudge)
        hs = np.diff(nodes)
        vecs = imp_v[imask]
        rec = np.zeros((rec_at.size, d), dtype=np.complex128)
        for lo, hi in _blocks(n_steps, d):
            # node lo belongs to the previous block except at the very start
            first = lo == 0
            ia = (add_at >= lo) & (add_at <= hi) if first else (add_at > lo) & (add_at <= hi)
            ra = (rec_at >= lo) & (rec_at <= hi) if first else (rec_at > lo) & (rec_at <= hi)
            sl = slice(2 * lo, 2 * hi + 1)
            u, r = kernels.rk4_march(sample_fn(ts[sl]), hs[lo:hi], u,
                                     S2=None if sample_fn2 is None else sample_fn2(ts[sl]),
                                     c1=c1, c2=c2,
                                     Sb=None if source_fn is None else source_fn(ts[sl]),
                                     add_at=add_at[ia] - lo, add_vecs=vecs[ia],
                                     rec_at=rec_at[ra] - lo)
            rec[ra] = r
        out[rmask] = rec
    return u, out


def refine(run: Callable[[float], np.ndarray], h0: float, tol: float, max_depth: int = 14,
           what: str = "march") -> tuple[np.ndarray, float]:
    """Halve the step until two successive results agree within tol/2.

    ``run(h)`` returns an array whose rows are compared in the 2-norm.
    Returns the finer result and the step it used.
    """
    h = h0
    prev = run(h)
    dist = float("inf")
    for _ in range(max_depth):
        h /= 2
        cur = run(h)
        diff = np.asarray(cur - prev)
        dist = float(np.max(np.linalg.norm(diff.reshape(diff.shape[0], -1), axis=1))
                     if diff.ndim > 1 else np.linalg.norm(diff))
        if dist <= tol / 2:
            return cur, h
        prev = cur
    raise ConvergenceError(f"{what} did not converge (last distance {dist:.3e})",
                           distance=dist)


def _initial_h(alpha: float, span: float, tol: float, min_steps: int = 1) -> float:
    return span / max(min_steps, _initial_steps(max(alpha, 1e-12), span, tol))


def _march_reference(problem: ODEProblem, times: np.ndarray, tol: float,
                     t_start: float = 0.0, max_depth: int = 14,
                     impulse_times: Sequence[float] = (),
                     impulse_vecs: np.ndarray | None = None) -> np.ndarray:
    times = np.asarray(times, dtype=np.float64)
    if times.size == 0:
        return np.zeros((0, problem.dim), dtype=np.complex128)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be ascending")
    span = float(times[-1] - t_start)
    if span <= 0 and len(impulse_times) == 0:
        return np.broadcast_to(problem.u0, (times.size, problem.dim)).copy()
    gen = problem.gen
    src = None if problem.homogeneous else problem.b_samples

    def run(h: float) -> np.ndarray:
        return march(gen.samples, t_start, float(times[-1]), problem.u0, h,
                     source_fn=src, cuts=gen.breakpoints, impulse_times=impulse_times,
                     impulse_vecs=impulse_vecs, rec_times=times)[1]

    h0 = _initial_h(gen.alpha_A, max(span, 1e-300), tol, 1 if problem.homogeneous else 8)
    return refine(run, h0, tol, max_depth, "solve_reference")[0]


def solve_reference(problem: ODEProblem, times, tol: float = 1e-10) -> Trajectory:
    """u(t) at each of ``times`` (ascending, within [0, T]) to within ``tol``."""
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    if times.size and (times[0] < 0 or times[-1] > problem.T * (1 + 1e-12)):
        raise ValueError("times must lie in [0, T]")
    states = _march_reference(problem, times, tol)
    return Trajectory(times=times, states=states)


def final_state_reference(problem: ODEProblem, tol: float = 1e-10) -> np.ndarray:
    return solve_reference(problem, [problem.T], tol).states[-1]


# ---------------------------------------------------------------------------
# random problem recipes


def _smooth_coef(rng: np.random.Generator, omega_max: float, nonneg: bool) -> CoefFn:
    w = float(rng.uniform(0.3, omega_max))
    ph = float(rng.uniform(0, 2 * np.pi))
    if nonneg:
        return lambda ts, w=w, ph=ph: 0.5 * (1.0 + np.sin(w * np.asarray(ts) + ph))
    return lambda ts, w=w, ph=ph: np.cos(w * np.asarray(ts) + ph)


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    Hm = 0.5 * (X + X.conj().T)
    return scale * Hm / opnorm(Hm)


def random_generator(dim: int, rng: np.random.Generator, *, eta: float = 0.5,
                     kind: str = "dissipative", n_terms: int = 2, scale: float = 1.0,
                     omega_max: float = 2.0, t_range: tuple[float, float] = (0.0, 1.0)
                     ) -> TimeGenerator:
    """Random smooth time-dependent generator.

    ``kind``:
      * ``dissipative``: L(t) = -eta*I - sum_i s_i(t) P_i with P_i >= 0 sharing a
        common null vector, so max_t lambda_max(L(t)) = -eta exactly;
      * ``semi``: same with eta = 0;
      * ``unitary``: L = 0;
      * ``general``: unconstrained.
    The anti-Hermitian part is i*(H_0 + sum_i c_i(t) H_i).
    """
    coefs: list[CoefFn] = []
    mats: list[np.ndarray] = []
    if kind in ("dissipative", "semi"):
        v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        v /= np.linalg.norm(v)
        Pv = np.eye(dim) - np.outer(v, v.conj())
        e = eta if kind == "dissipative" else 0.0
        coefs.append(lambda ts: np.ones_like(np.asarray(ts, dtype=float)))
        mats.append(-e * np.eye(dim) + 1j * random_hermitian(dim, rng, scale * 0.5))
        for _ in range(n_terms):
            R = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            P = Pv @ R @ R.conj().T @ Pv
            P = scale * 0.5 * P / opnorm(P)
            coefs.append(_smooth_coef(rng, omega_max, nonneg=True))
            mats.append(-P)
            coefs.append(_smooth_coef(rng, omega_max, nonneg=False))
            mats.append(1j * random_hermitian(dim, rng, scale * 0.3))
    elif kind == "unitary":
        coefs.append(lambda ts: np.ones_like(np.asarray(ts, dtype=float)))
        mats.append(1j * random_hermitian(dim, rng, scale * 0.5))
        for _ in range(n_terms):
            coefs.append(_smooth_coef(rng, omega_max, nonneg=False))
            mats.append(1j * random_hermitian(dim, rng, scale * 0.4))
    elif kind == "general":
        for _ in range(n_terms + 1):
            X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            coefs.append(_smooth_coef(rng, omega_max, nonneg=False))
            mats.append(scale * 0.5 * X / opnorm(X))
    else:
        raise ValueError(f"unknown generator kind {kind!r}")
    return term_generator(coefs, mats, t_range=t_range, label=f"random-{kind}")
