"""Linear combination of Hamiltonian simulation (LCHS) emulation.

For L(t) <= 0 the propagator is a weighted integral over k of the unitaries
U_k generated by k L(t) + H(t). Truncating the integral to [-K, K] and
applying panelled Gauss-Legendre rules gives a finite sum sum_j c_j U(T, k_j).
The emulators here evaluate that sum classically: every U_k acting on a
vector is one RK4 march on a time grid shared by all k, and inhomogeneous
terms enter as impulses at the nodes of a second (time) quadrature.

Budgeted mode perturbs each Hamiltonian-simulation branch by a random
vector of the size the error schedule allows; ideal mode leaves only the
quadrature error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .dissipation import (
    plan_M0_history_homo,
    plan_T0_for_problem,
    plan_window_history_inhomo,
    surrogate_uT_norm,
    truncated_final_state,
)
from .emulation import (
    SCENARIOS,
    EmulatedState,
    ErrorBudget,
    ResourceReport,
    lg,
    llg,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateSolutionError,
    PreconditionError,
    ToleranceFailure,
)
from .linalg import (
    ODEProblem,
    TimeGenerator,
    _initial_steps,
    _node_samples,
    opnorm,
    propagate_reference,
    solve_reference,
)
from .quadrature import gauss_legendre

DEFAULT_BETA = 0.9
UNITARITY_TOL = 1e-9


# ---------------------------------------------------------------------------
# kernel


def kernel_weight(k, beta: float):
    """1 / (2 pi e^{-2^beta} (1 - ik) e^{(1+ik)^beta}) with the principal branch.

    Accepts a scalar or an array of real k.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    karr = np.asarray(k, dtype=np.float64)
    z = np.power(1.0 + 1j * karr, beta)
    w = 1.0 / (2.0 * np.pi * math.exp(-(2.0 ** beta)) * (1.0 - 1j * karr) * np.exp(z))
    return complex(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class KernelParams:
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")

    @property
    def normalization(self) -> complex:
        return complex(1.0 / (2.0 * math.pi * math.exp(-(2.0 ** self.beta))))

    def weight(self, k):
        return kernel_weight(k, self.beta)


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class KGrid:
    K: float
    h1: float
    Q_nodes: int
    ks: np.ndarray
    cs: np.ndarray
    beta: float
    eps_a: float
    h1_planned: float
    M_s_planned: float
    c_K: float = 1.0
    c_Q: float = 1.0

    @property
    def points(self) -> list[tuple[float, complex]]:
        return list(zip(self.ks.tolist(), self.cs.tolist()))

    @property
    def panels(self) -> int:
        return self.ks.size // self.Q_nodes

    @property
    def M_s(self) -> int:
        return int(self.ks.size)

    @property
    def l1(self) -> float:
        return float(np.sum(np.abs(self.cs)))


@dataclass(frozen=True)
class TGrid:
    h2: float
    Q2: int
    ts: np.ndarray
    cprime: np.ndarray
    bkets: np.ndarray
    window: tuple[float, float]
    hint: float
    h2_planned: float = float("nan")

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.ts.tolist(), self.cprime.tolist()))

    @property
    def l1(self) -> float:
        return float(np.sum(np.abs(self.cprime)))

    @property
    def M_s_prime(self) -> int:
        return int(self.ts.size)

    @property
    def empty(self) -> bool:
        return self.ts.size == 0


def _log_inv(eps: float) -> float:
    return math.log(1.0 / eps) if eps < 1 else 0.0


def plan_k_grid(beta: float, eps_a: float, T: float, alpha_L: float, c_K: float = 1.0,
                c_Q: float = 1.0) -> KGrid:
    """Panelled Gauss-Legendre rule for the k-integral on [-K, K).

    K = c_K log(1/eps_a)^{1/beta}, panel width h1 = 1/(e T alpha_L) and
    Q_nodes = ceil(c_Q log(1/eps_a)) nodes per panel; K and Q_nodes are
    floored at 1. The product T alpha_L is floored at 1 because the kernel
    itself varies on unit scale; panels are shrunk slightly so that a whole
    number of them tiles the interval.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if min(eps_a, T, alpha_L, c_K, c_Q) <= 0:
        raise ValueError("plan_k_grid needs positive inputs")
    lo = _log_inv(eps_a)
    K = max(1.0, c_K * lo ** (1.0 / beta))
    Q = max(1, math.ceil(c_Q * lo - 1e-12))
    h1_planned = 1.0 / (math.e * T * alpha_L)
    h1_eff = min(h1_planned, 1.0 / math.e)
    P = max(1, math.ceil(2.0 * K / h1_eff - 1e-9))
    width = 2.0 * K / P
    rule = gauss_legendre(Q, -1.0, 1.0)
    mids = -K + width * (np.arange(P) + 0.5)
    ks = (mids[:, None] + 0.5 * width * rule.nodes[None, :]).reshape(-1)
    ws = np.tile(0.5 * width * rule.weights, P)
    cs = kernel_weight(ks, beta) * ws
    return KGrid(K=K, h1=width, Q_nodes=Q, ks=ks, cs=np.asarray(cs, dtype=np.complex128),
                 beta=beta, eps_a=eps_a, h1_planned=h1_planned,
                 M_s_planned=2.0 * K / h1_planned * Q, c_K=c_K, c_Q=c_Q)


def scalar_identity_error(grid: KGrid, x_max: float, n_x: int = 51) -> float:
    """max over x in [-x_max, 0] of |sum_j c_j e^{i k_j x} - e^x|."""
    xs = np.linspace(-x_max, 0.0, n_x)
    approx = np.exp(1j * np.outer(xs, grid.ks)) @ grid.cs
    return float(np.max(np.abs(approx - np.exp(xs))))


def tail_integral(K: float, beta: float, k_max: float = 1e4, n: int = 200_000) -> complex:
    """Numerical value of int_{|k| > K} kernel_weight(k) dk, truncated at k_max."""
    if K >= k_max:
        return 0j
    # geometric spacing resolves the slow algebraic-exponential decay
    ks = np.geomspace(K, k_max, n)
    w = kernel_weight(ks, beta)
    wm = kernel_weight(-ks, beta)
    f = w + wm
    return complex(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(ks)))


def tail_mass(K: float, beta: float, k_max: float = 1e4, n: int = 200_000) -> float:
    """int_{|k| > K} |kernel_weight(k)| dk, truncated at k_max.

    Since every U_k is unitary this bounds the truncation part of the
    operator error of the k-quadrature.
    """
    if K >= k_max:
        return 0.0
    ks = np.geomspace(K, k_max, n)
    f = np.abs(kernel_weight(ks, beta)) + np.abs(kernel_weight(-ks, beta))
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(ks)))


@dataclass(frozen=True)
class Calibration:
    c_K: float
    c_Q: float
    beta: float
    eps_a: float
    error: float
    safety: float


C_Q_CANDIDATES = (0.25, 0.5, 0.75, 1.0, 1.5, 2.0)


@lru_cache(maxsize=64)
def _calibrate(beta: float, eps_a: float, safety: float, c_Q_min: float) -> Calibration:
    target = safety * eps_a
    best = None
    for c_Q in C_Q_CANDIDATES:
        if c_Q < c_Q_min:
            continue
        c_K = 0.5
        while c_K <= 20.0:
            g = plan_k_grid(beta, eps_a, 1.0, 1.0, c_K, c_Q)
            err = scalar_identity_error(g, 1.0)
            if err <= target:
                cost = g.M_s
                if best is None or cost < best[0]:
                    best = (cost, Calibration(c_K, c_Q, beta, eps_a, err, safety))
                break
            c_K += 0.25
    if best is None:
        raise ConvergenceError(f"no k-grid constants reach {target:.2e}", distance=float("nan"))
    return best[1]


def calibrate_k_constants(beta: float = DEFAULT_BETA, eps_a: float = 1e-3,
                          safety: float = 0.5, c_Q_min: float = 0.5) -> Calibration:
    """Cheapest (c_K, c_Q) on a 0.25 grid for which the scalar identity holds.

    The test function is e^x = sum_j c_j e^{i k_j x} for x in [-1, 0]
    (L = x, H = 0, T = 1), required to ``safety * eps_a``. ``eps_a`` is
    rounded down to a power of ten so results are shared across nearby
    tolerances. ``c_Q_min`` keeps a margin for non-normal generators.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if not 0 < eps_a < 1:
        raise ValueError("eps_a must lie in (0, 1)")
    decade = 10.0 ** math.floor(math.log10(eps_a) + 1e-12)
    return _calibrate(float(beta), decade, float(safety), float(c_Q_min))


def _resolve_constants(beta: float, eps_a: float, c_K, c_Q) -> tuple[float, float]:
    if c_K is None or c_Q is None:
        if eps_a >= 1:
            return (c_K or 1.0), (c_Q or 1.0)
        cal = calibrate_k_constants(beta, eps_a)
        return (cal.c_K if c_K is None else c_K), (cal.c_Q if c_Q is None else c_Q)
    return float(c_K), float(c_Q)


def default_smoothness_hint(problem: ODEProblem) -> float:
    """alpha_A + b_max, used when the problem carries no explicit hint."""
    return problem.gen.alpha_A + problem.b_max


def plan_t_grid(problem: ODEProblem, eps_b: float, beta: float = DEFAULT_BETA,
                c_h2: float = 1.0, c_Q2: float = 1.0, *, K: float,
                window: tuple[float, float] | None = None,
                smoothness_hint: float | None = None,
                require_hint: bool = False) -> TGrid:
    """Time quadrature for the source integral on ``window`` (default [0, T]).

    h2 = 1/(c_h2 e K hint), Q2 = ceil(c_Q2 log(span hint / eps_b)) nodes per
    panel, weights c' = Gauss weight * ||b(t)|| and kets b(t)/||b(t)||.
    The hint is the explicit argument, else the generator's hint plus b_max,
    else alpha_A + b_max; ``require_hint`` turns the last fallback into a
    configuration error.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if min(eps_b, c_h2, c_Q2, K) <= 0:
        raise ValueError("plan_t_grid needs positive inputs")
    a, b = window if window is not None else (0.0, problem.T)
    if not 0 <= a <= b <= problem.T * (1 + 1e-12):
        raise ValueError("window must lie in [0, T]")
    d = problem.dim
    if smoothness_hint is not None:
        hint = float(smoothness_hint)
    elif problem.gen.smoothness_hint is not None:
        hint = problem.gen.smoothness_hint + problem.b_max
    elif require_hint:
        raise ConfigError("plan_t_grid needs a smoothness hint")
    else:
        hint = default_smoothness_hint(problem)
    if problem.homogeneous or b <= a:
        return TGrid(h2=float("inf"), Q2=0, ts=np.zeros(0), cprime=np.zeros(0),
                     bkets=np.zeros((0, d), dtype=np.complex128), window=(a, b), hint=hint)
    if hint <= 0:
        raise ConfigError("smoothness hint must be positive")
    span = b - a
    h2_planned = 1.0 / (c_h2 * math.e * K * hint)
    P = max(1, math.ceil(span / h2_planned - 1e-9))
    width = span / P
    Q2 = max(1, math.ceil(c_Q2 * lg(span * hint / eps_b) - 1e-12))
    rule = gauss_legendre(Q2, 0.0, width)
    ts = (a + width * np.arange(P)[:, None] + rule.nodes[None, :]).reshape(-1)
    ws = np.tile(rule.weights, P)
    bv = problem.b_samples(ts)
    bn = np.linalg.norm(bv, axis=1)
    kets = np.where(bn[:, None] > 0, bv / np.where(bn > 0, bn, 1.0)[:, None], 0.0)
    return TGrid(h2=width, Q2=Q2, ts=ts, cprime=ws * bn, bkets=kets.astype(np.complex128),
                 window=(a, b), hint=hint, h2_planned=h2_planned)


# ---------------------------------------------------------------------------
# the k-family of Hamiltonian simulations


def _hamiltonian_generator(gen: TimeGenerator, k: float) -> TimeGenerator:
    """The generator i(k L(t) + H(t)) of U_k."""

    def sampler(ts):
        Ls, Hs = gen.split_samples(np.atleast_1d(ts))
        return 1j * (k * Ls + Hs)

    def func(t):
        return sampler(np.array([t]))[0]

    alpha = abs(k) * gen.alpha_L((0.0, 1.0)) + gen.alpha_A
    return TimeGenerator(dim=gen.dim, func=func, alpha_A=max(alpha, gen.alpha_A),
                         sampler=sampler, breakpoints=gen.breakpoints,
                         label=f"lchs-k({gen.label})")


class _Family:
    """Time grid and L/H samples shared by every U_k over [t0, t1].

    Nodes include every impulse and record time; between them the step is
    at most (t1 - t0)/n_steps.
    """

    def __init__(self, gen: TimeGenerator, t0: float, t1: float, n_steps: int,
                 impulse_times=(), rec_times=()):
        self.d = gen.dim
        imp = np.asarray(impulse_times, dtype=np.float64)
        rec = np.asarray(rec_times, dtype=np.float64)
        cuts = [c for c in gen.breakpoints if t0 < c < t1]
        pts = np.unique(np.concatenate([[t0, t1], cuts, imp, rec]))
        hmax = (t1 - t0) / max(1, n_steps) if t1 > t0 else 1.0
        m = np.maximum(1, np.ceil(np.diff(pts) / hmax - 1e-9).astype(int))
        nodes = [pts[:1]]
        for x, y, mi in zip(pts[:-1], pts[1:], m):
            nodes.append(np.linspace(x, y, mi + 1)[1:])
        self.nodes = np.concatenate(nodes)
        self.nodes[-1] = pts[-1]
        self.hs = np.diff(self.nodes)
        L, H = gen.split_samples(_node_samples(self.nodes, False))
        self.L = np.ascontiguousarray(L)
        self.H = np.ascontiguousarray(H)
        self.add_at = np.searchsorted(self.nodes, imp)
        self.rec_at = np.searchsorted(self.nodes, rec)
        self.n_steps = int(self.hs.size)

    def march(self, ks: np.ndarray, u_start: np.ndarray, add_vecs: np.ndarray | None = None):
        ks = np.atleast_1d(np.asarray(ks, dtype=np.float64))
        U0 = np.broadcast_to(np.asarray(u_start, dtype=np.complex128), (ks.size, self.d))
        add_at = self.add_at if add_vecs is not None else None
        return kernels.rk4_family(self.L, self.H, ks, self.hs, U0, add_at=add_at,
                                  add_vecs=add_vecs, rec_at=self.rec_at)

    def matrices(self, ks: np.ndarray) -> np.ndarray:
        ks = np.atleast_1d(np.asarray(ks, dtype=np.float64))
        d = self.d
        U0 = np.tile(np.eye(d, dtype=np.complex128), (ks.size, 1))
        cols = kernels.rk4_family(self.L, self.H, np.repeat(ks, d), self.hs, U0)[0]
        return np.swapaxes(cols.reshape(ks.size, d, d), 1, 2)


class _GridEngine:
    """All U_k by RK4 on shared grids, one grid per band of |k|.

    The step count is doubled until a march at the largest |k| is accurate
    to ``tol``; bands with smaller |k| use proportionally fewer steps.
    """

    def __init__(self, gen: TimeGenerator, t0: float, t1: float, k_max: float, tol: float,
                 impulse_times=(), rec_times=(), probe_u=None, probe_vecs=None,
                 bands: int = 4, max_depth: int = 12):
        self.d = gen.dim
        self.k_max = max(float(k_max), 1e-300)
        span = max(t1 - t0, 0.0)
        aL = gen.alpha_L((t0, t1)) if span > 0 else 0.0
        aH = gen.alpha_A
        args = (impulse_times, rec_times)

        def probe(f: _Family) -> np.ndarray:
            if probe_u is None:
                return f.matrices(np.array([k_max]))[0]
            return f.march(np.array([k_max]), probe_u, probe_vecs)[0][0]

        n = _initial_steps(max(k_max * aL + aH, 1e-12), max(span, 1e-300), tol) if span else 1
        fam = _Family(gen, t0, t1, n, *args)
        if span > 0:
            prev = probe(fam)
            dist = float("inf")
            for _ in range(max_depth):
                n *= 2
                fam = _Family(gen, t0, t1, n, *args)
                cur = probe(fam)
                # RK4 is fourth order: the finer grid carries ~1/15 of the difference
                dist = float(np.max(np.abs(cur - prev)))
                if dist / 15.0 <= tol:
                    break
                prev = cur
            else:
                raise ConvergenceError(
                    f"LCHS march did not converge (last distance {dist:.3e})", distance=dist)
        self.edges = np.linspace(0.0, self.k_max, bands + 1)
        self.fams = []
        for b in range(bands):
            hi = self.edges[b + 1]
            nb = max(1, math.ceil(n * (hi * aL + aH) / max(k_max * aL + aH, 1e-300)))
            self.fams.append(fam if b == bands - 1 else _Family(gen, t0, t1, nb, *args))
        self.n_steps = max(f.n_steps for f in self.fams)
        self.n_rec = len(rec_times)

    def _bands(self, ks: np.ndarray) -> np.ndarray:
        idx = np.floor(np.abs(ks) / self.k_max * len(self.fams)).astype(int)
        return np.clip(idx, 0, len(self.fams) - 1)

    def march(self, ks, u_start, imp_vecs=None):
        ks = np.asarray(ks, dtype=np.float64)
        final = np.zeros((ks.size, self.d), dtype=np.complex128)
        recs = np.zeros((self.n_rec, ks.size, self.d), dtype=np.complex128)
        band = self._bands(ks)
        for b, fam in enumerate(self.fams):
            sel = np.nonzero(band == b)[0]
            if sel.size:
                final[sel], recs[:, sel] = fam.march(ks[sel], u_start, imp_vecs)
        return final, recs

    def matrices(self, ks) -> np.ndarray:
        ks = np.asarray(ks, dtype=np.float64)
        out = np.zeros((ks.size, self.d, self.d), dtype=np.complex128)
        band = self._bands(ks)
        for b, fam in enumerate(self.fams):
            sel = np.nonzero(band == b)[0]
            if sel.size:
                out[sel] = fam.matrices(ks[sel])
        return out


class _ConstantEngine:
    """Exact U_k for a time-independent generator.

    For real k the matrix k L + H is Hermitian, so U_k(t) = V e^{i lam t} V^dagger.
    Impulses become phase-weighted cumulative sums in the eigenbasis.
    """

    budget_entries = 2_000_000

    def __init__(self, gen: TimeGenerator, t0: float, t1: float, impulse_times=(),
                 rec_times=()):
        from .linalg import cartesian_split

        self.L, self.H = cartesian_split(gen.eval(0.0))
        self.d = gen.dim
        self.t0, self.t1 = float(t0), float(t1)
        self.imp_t = np.asarray(impulse_times, dtype=np.float64)
        self.rec_t = np.asarray(rec_times, dtype=np.float64)
        self.n_steps = 0
        self._panels = self._panel_split(self.imp_t)

    @staticmethod
    def _panel_split(ts: np.ndarray):
        """(anchors, offsets) when ts is a run of equal panels sharing node offsets.

        Phases then factor as e^{-i lam (a_p + o_q)} = e^{-i lam a_p} e^{-i lam o_q},
        which needs P + Q exponentials per eigenvalue instead of P Q.
        """
        n = ts.size
        if n < 4:
            return None
        atol = 1e-13 * max(1.0, float(np.max(np.abs(ts))))
        for q in range(2, min(n // 2, 64) + 1):
            nfull, tail = divmod(n, q)
            grid = ts[:nfull * q].reshape(nfull, q)
            anchors, offsets = grid[:, 0], grid[0] - grid[0, 0]
            if np.max(np.abs(grid - anchors[:, None] - offsets[None, :])) > atol:
                continue
            if tail:
                last = ts[nfull * q:]
                if np.max(np.abs(last - last[0] - offsets[:tail])) > atol:
                    continue
                anchors = np.append(anchors, last[0])
            return anchors, offsets
        return None

    def _eig(self, ks: np.ndarray):
        lam, V = np.linalg.eigh(ks[:, None, None] * self.L[None] + self.H[None])
        return lam, V, np.conj(np.swapaxes(V, 1, 2))

    def _impulse_sums(self, lam, Vh, imp_vecs, idx) -> np.ndarray:
        """sum_{j < idx[m]} e^{-i lam s_j} V^dagger b_j for every m, shape (nk, len(idx), d)."""
        nk, d = lam.shape
        if self._panels is None:
            W = np.exp(-1j * lam[:, None, :] * self.imp_t[None, :, None])
            W = W * (imp_vecs[None] @ np.swapaxes(Vh, 1, 2))
            C = np.concatenate([np.zeros((nk, 1, d), dtype=np.complex128),
                                np.cumsum(W, axis=1)], axis=1)
            return C[:, idx, :]
        anchors, offsets = self._panels
        P, Q = anchors.size, offsets.size
        pad = P * Q - imp_vecs.shape[0]  # a trailing partial panel gets zero sources
        bq = np.concatenate([imp_vecs, np.zeros((pad, d), dtype=np.complex128)]).reshape(P, Q, d)
        po = np.exp(-1j * lam[:, :, None] * offsets[None, None, :])  # (nk, d, Q)
        # G[k, i, p, j] = sum_q e^{-i lam_ki o_q} b_{pq, j}
        G = (po.reshape(nk * d, Q) @ bq.transpose(1, 0, 2).reshape(Q, P * d)).reshape(nk, d, P, d)
        S = np.einsum("kij,kipj->kpi", Vh, G)
        S *= np.exp(-1j * lam[:, None, :] * anchors[None, :, None])
        C = np.concatenate([np.zeros((nk, 1, d), dtype=np.complex128),
                            np.cumsum(S, axis=1)], axis=1)
        full, rem = np.divmod(np.asarray(idx), Q)
        out = C[:, full, :]
        for m in np.flatnonzero(rem):
            j0, j1 = full[m] * Q, full[m] * Q + rem[m]
            ph = np.exp(-1j * lam[:, None, :] * self.imp_t[None, j0:j1, None])
            out[:, m] += np.sum(ph * (imp_vecs[None, j0:j1] @ np.swapaxes(Vh, 1, 2)), axis=1)
        return out

    def march(self, ks, u_start, imp_vecs=None):
        ks = np.asarray(ks, dtype=np.float64)
        d, nk = self.d, ks.size
        final = np.zeros((nk, d), dtype=np.complex128)
        recs = np.zeros((self.rec_t.size, nk, d), dtype=np.complex128)
        use_imp = imp_vecs is not None and self.imp_t.size > 0
        if not use_imp:
            width = d
        elif self._panels is None:
            width = self.imp_t.size * d
        else:
            width = self._panels[0].size * d * d + self._panels[1].size * d
        chunk = max(1, self.budget_entries // max(1, width))
        u_start = np.asarray(u_start, dtype=np.complex128)
        times = np.concatenate([[self.t1], self.rec_t])
        if use_imp:
            imp_vecs = np.asarray(imp_vecs, dtype=np.complex128)
            idx = np.searchsorted(self.imp_t, times, side="right")
        for s in range(0, nk, chunk):
            kk = ks[s:s + chunk]
            lam, V, Vh = self._eig(kk)
            # z(t) = e^{-i lam t} (eigen-coordinates of the state at t)
            z0 = np.exp(-1j * lam * self.t0) * (Vh @ u_start)
            Z = np.broadcast_to(z0[:, None, :], (kk.size, times.size, d)).copy()
            if use_imp:
                Z += self._impulse_sums(lam, Vh, imp_vecs, idx)
            Y = np.exp(1j * lam[:, None, :] * times[None, :, None]) * Z
            X = Y @ np.swapaxes(V, 1, 2)
            final[s:s + chunk] = X[:, 0]
            recs[:, s:s + chunk] = np.swapaxes(X[:, 1:], 0, 1)
        return final, recs

    def matrices(self, ks) -> np.ndarray:
        ks = np.asarray(ks, dtype=np.float64)
        lam, V, Vh = self._eig(ks)
        return (V * np.exp(1j * lam * (self.t1 - self.t0))[:, None, :]) @ Vh


def _engine(gen: TimeGenerator, t0: float, t1: float, k_max: float, tol: float,
            impulse_times=(), rec_times=(), probe_u=None, probe_vecs=None):
    if gen.constant:
        return _ConstantEngine(gen, t0, t1, impulse_times, rec_times)
    return _GridEngine(gen, t0, t1, k_max, tol, impulse_times, rec_times, probe_u, probe_vecs)


def unitary_U(gen: TimeGenerator, k: float, t0: float, t1: float, mode: str = "ideal", *,
              eps_0: float | None = None, order: int | None = None,
              tol: float = 1e-11, return_info: bool = False):
    """T exp(i int_{t0}^{t1} (k L(s) + H(s)) ds).

    ``ideal`` integrates with the reference propagator and checks unitarity.
    ``budgeted`` builds it from truncated Dyson steps of length at most
    1/alpha_k, raising the order until the measured deviation is <= eps_0.
    """
    if t1 < t0:
        raise ValueError("unitary_U needs t0 <= t1")
    hg = _hamiltonian_generator(gen, k)
    U = propagate_reference(hg, t0, t1, tol)
    dev = opnorm(U.conj().T @ U - np.eye(gen.dim))
    if dev > UNITARITY_TOL:
        raise ToleranceFailure(f"U_k is not unitary to {UNITARITY_TOL} (deviation {dev:.2e})")
    info = {"unitarity": dev, "mode": mode}
    if mode == "ideal":
        return (U, info) if return_info else U
    if mode != "budgeted":
        raise ValueError("mode must be 'ideal' or 'budgeted'")
    if eps_0 is None or not 0 < eps_0 < 1:
        raise ValueError("budgeted mode needs eps_0 in (0, 1)")
    from .timemarching import MAX_ORDER, dyson_step, order_for_eps0

    span = t1 - t0
    steps = max(1, math.ceil(hg.alpha_A * span - 1e-12))
    h = span / steps if span > 0 else 0.0
    order = order or order_for_eps0(min(0.5, eps_0 / steps))
    while True:
        W = np.eye(gen.dim, dtype=np.complex128)
        for s in range(steps):
            if h > 0:
                W = dyson_step(hg, t0 + s * h, h, order, reference=np.eye(gen.dim)).matrix @ W
        deviation = opnorm(W - U)
        if deviation <= eps_0 or order >= MAX_ORDER:
            break
        order += 1
    info.update({"order": order, "steps": steps, "deviation": deviation})
    return (W, info) if return_info else W


def lchs_operator(gen: TimeGenerator, grid: KGrid, t0: float, t1: float,
                  tol: float = 1e-6) -> np.ndarray:
    """sum_j c_j U(t1, t0, k_j), each U accurate to about ``tol``."""
    kmax = float(np.max(np.abs(grid.ks)))
    eng = _engine(gen, t0, t1, kmax, tol)
    return np.einsum("k,kij->ij", grid.cs, eng.matrices(grid.ks))


def _perturb_rows(X: np.ndarray, norms, rng: np.random.Generator) -> np.ndarray:
    """X plus random complex rows of the given norms (last axis is the vector)."""
    E = rng.normal(size=X.shape) + 1j * rng.normal(size=X.shape)
    E /= np.linalg.norm(E, axis=-1, keepdims=True)
    return X + E * np.asarray(norms)[..., None]


# ---------------------------------------------------------------------------
# emulators


def _check_L(gen: TimeGenerator, t0: float, t1: float, tol: float = 1e-10,
             n: int = 1024) -> float:
    ts = np.linspace(t0, t1, n)
    Ls, _ = gen.split_samples(ts)
    top = float(np.max(np.linalg.eigvalsh(Ls)[:, -1]))
    if top > tol:
        raise PreconditionError(f"LCHS needs L(t) <= 0; largest eigenvalue {top:.3e}")
    return top


def _norm_u(v: np.ndarray) -> float:
    n = float(np.linalg.norm(v))
    if not np.isfinite(n) or n < 1e-300:
        raise DegenerateSolutionError("||u(T)|| underflows")
    return n


def _alpha_L(gen: TimeGenerator, t0: float, t1: float) -> float:
    return max(gen.alpha_L((t0, t1)), 1e-12)


def _select_cost(grid: KGrid, alpha_L: float, alpha_H: float, T: float, eps0: float) -> float:
    """(alpha_L K + alpha_H) T lg(x)/llg(x) with x = (alpha_L K + alpha_H) T / eps0."""
    a = (alpha_L * grid.K + alpha_H) * T
    x = a / max(eps0, 1e-300)
    return a * lg(x) / llg(x)


def _grid_counters(grid: KGrid, tgrid: TGrid | None = None, **extra) -> dict:
    c = {"K": grid.K, "h1": grid.h1, "h1_planned": grid.h1_planned, "Q_nodes": grid.Q_nodes,
         "M_s": grid.M_s, "M_s_planned": grid.M_s_planned, "k_panels": grid.panels,
         "c_K": grid.c_K, "c_Q": grid.c_Q, "c_l1": grid.l1}
    if tgrid is not None:
        c.update({"h2": tgrid.h2, "h2_planned": tgrid.h2_planned, "Q2": tgrid.Q2,
                  "M_s_prime": tgrid.M_s_prime, "cprime_l1": tgrid.l1})
    c.update(extra)
    return c


def lchs_final_homogeneous(problem: ODEProblem, eps_tol: float, *,
                           beta: float = DEFAULT_BETA, c_K: float | None = None,
                           c_Q: float | None = None, mode: str = "ideal", seed: int = 0,
                           march_tol: float | None = None) -> tuple[EmulatedState, ResourceReport]:
    """Emulate sum_j c_j U(T, k_j) |u0>, normalised by ||c||_1.

    The budget follows the LCU analysis: eps_a = ||u(T)|| eps_tol / (4 ||u0||)
    for the k-quadrature and eps0 = eps_a / ||c||_1 for each simulation.
    ``c_K``/``c_Q`` default to calibrated values.
    """
    if not problem.homogeneous:
        raise PreconditionError("lchs_final_homogeneous needs b == 0")
    if mode not in ("ideal", "budgeted"):
        raise ValueError("mode must be 'ideal' or 'budgeted'")
    gen, T = problem.gen, problem.T
    _check_L(gen, 0.0, T)
    u0n = problem.u0_norm
    if u0n == 0:
        raise DegenerateSolutionError("u0 = 0")
    ket0 = problem.u0 / u0n
    uT_ref = solve_reference(problem, [T], 1e-11).states[-1]
    uTn = _norm_u(uT_ref)
    eps_a = min(0.5, uTn * eps_tol / (4.0 * u0n))
    cK, cQ = _resolve_constants(beta, eps_a, c_K, c_Q)
    aL = _alpha_L(gen, 0.0, T)
    grid = plan_k_grid(beta, eps_a, T, aL, cK, cQ)
    eps0 = eps_a / grid.l1
    tol = march_tol if march_tol is not None else 0.1 * eps0
    kmax = float(np.max(np.abs(grid.ks)))
    eng = _engine(gen, 0.0, T, kmax, tol, probe_u=ket0)
    W = eng.march(grid.ks, ket0)[0]
    if mode == "budgeted":
        W = _perturb_rows(W, np.full(grid.M_s, eps0), np.random.default_rng(seed))
    vec = grid.cs @ W
    budget = ErrorBudget(eps_tol=eps_tol, eps_0=eps0 if mode == "budgeted" else 0.0,
                         eps_a=eps_a, Q=u0n / uTn,
                         extra={"beta": beta, "mode": mode, "march_tol": tol})
    err = float(np.linalg.norm(vec / _norm_u(vec) - uT_ref / uTn))
    state = EmulatedState(vector=vec, norm_factor=grid.l1, budget=budget,
                          meta={"grid": grid, "uT_norm": uTn, "reference_unit": uT_ref / uTn,
                                "error_vs_reference": err, "march_steps": eng.n_steps})
    rep = lchs_resource_estimate("final_homo", gen.alpha_A, T, None, beta, eps_tol,
                                 {"u0_norm": u0n, "uT_norm": uTn})
    rep.counters = _grid_counters(
        grid, select_cost=_select_cost(grid, aL, gen.alpha_A, T, eps0),
        aa_rounds=math.ceil(u0n / uTn - 1e-12))
    return state, rep


def _inhomo_budget(eps_avail: float, uTn: float, u0n: float, b_l1: float) -> tuple[float, float]:
    """(eps_a, eps_b) with the k- and t-quadrature each allowed a sixth of the
    normalised error (the normalised distance is at most twice the relative one)."""
    share = eps_avail * uTn / 6.0
    eps_a = min(0.5, share / max(u0n + b_l1, 1e-300))
    return eps_a, share


def _b_l1(problem: ODEProblem, a: float, b: float, panels: int | None = None) -> float:
    """int_a^b ||b(t)|| dt by panelled 16-point Gauss-Legendre."""
    if problem.homogeneous or b <= a:
        return 0.0
    P = panels or max(4, math.ceil(2 * (b - a)))
    rule = gauss_legendre(16, 0.0, (b - a) / P)
    ts = (a + (b - a) / P * np.arange(P)[:, None] + rule.nodes[None, :]).reshape(-1)
    return float(np.tile(rule.weights, P) @ np.linalg.norm(problem.b_samples(ts), axis=1))


def lchs_final_inhomogeneous(problem: ODEProblem, eps_tol: float, fast_forward: bool = False,
                             *, beta: float = DEFAULT_BETA, c_K: float | None = None,
                             c_Q: float | None = None, c_h2: float = 1.0, c_Q2: float = 1.0,
                             c_T0: float = 1.0, certified: bool = True, mode: str = "ideal",
                             seed: int = 0, smoothness_hint: float | None = None,
                             march_tol: float | None = None
                             ) -> tuple[EmulatedState, ResourceReport]:
    """Emulate (sum_j c_j U(T,0,k_j) ||u0|| |u0> + sum_{j',j} c'_{j'} c_j U(T,t_{j'},k_j)|b(t_{j'})>)
    normalised by ||c||_1 (||u0|| + ||c'||_1).

    ``fast_forward`` restricts the source integral to [T - T0, T] and drops
    the u0 branch; the window comes from the certified effective-time planner.
    """
    if fast_forward and problem.eta is None:
        raise PreconditionError("fast_forward needs a dissipative problem (eta set)")
    if problem.homogeneous:
        return lchs_final_homogeneous(problem, eps_tol, beta=beta, c_K=c_K, c_Q=c_Q, mode=mode,
                                      seed=seed, march_tol=march_tol)
    if mode not in ("ideal", "budgeted"):
        raise ValueError("mode must be 'ideal' or 'budgeted'")
    gen, T, d = problem.gen, problem.T, problem.dim
    _check_L(gen, 0.0, T)
    uT_ref = solve_reference(problem, [T], 1e-11).states[-1]
    uTn = _norm_u(uT_ref)
    a, with_u0, plan, eps_trunc = 0.0, True, None, 0.0
    uT_used = uTn
    if fast_forward:
        eps_trunc = eps_tol / 2
        uT_used = surrogate_uT_norm(problem)
        plan = plan_T0_for_problem(problem, eps_trunc, c_T0, certified=certified,
                                   uT_norm=uT_used,
                                   min_window=min(T, 1.0 / max(gen.alpha_A, 1e-300)))
        if not plan.full_horizon:
            a, with_u0 = T - plan.T0, False
    span = T - a
    u0n = problem.u0_norm if with_u0 else 0.0
    b_l1 = _b_l1(problem, a, T)
    eps_a, eps_b = _inhomo_budget(eps_tol - eps_trunc, uT_used, u0n, b_l1)
    # one k-grid serves both branches: the source branch needs K at 1 + ||b||_L1/eps_b
    eps_k = min(eps_a, 1.0 / (1.0 + b_l1 / eps_b))
    cK, cQ = _resolve_constants(beta, eps_k, c_K, c_Q)
    aL = _alpha_L(gen, a, T)
    grid = plan_k_grid(beta, eps_k, span, aL, cK, cQ)
    tgrid = plan_t_grid(problem, eps_b, beta, c_h2, c_Q2, K=grid.K, window=(a, T),
                        smoothness_hint=smoothness_hint)
    D = u0n + tgrid.l1
    eps0 = (eps_tol - eps_trunc) * uT_used / (6.0 * grid.l1 * D)
    tol = march_tol if march_tol is not None else 0.1 * eps0 * D
    kmax = float(np.max(np.abs(grid.ks)))
    u_start = problem.u0.astype(np.complex128) if with_u0 else np.zeros(d, dtype=np.complex128)
    vecs = tgrid.cprime[:, None] * tgrid.bkets
    eng = _engine(gen, a, T, kmax, tol, impulse_times=tgrid.ts, probe_u=u_start,
                  probe_vecs=vecs)
    W = eng.march(grid.ks, u_start, vecs)[0]
    if mode == "budgeted":
        W = _perturb_rows(W, np.full(grid.M_s, eps0 * D), np.random.default_rng(seed))
    vec = grid.cs @ W
    target = uT_ref if with_u0 else truncated_final_state(problem, span, 1e-11)
    quad_err = 2.0 * float(np.linalg.norm(vec - target)) / uTn if mode == "ideal" else float("nan")
    err = float(np.linalg.norm(vec / _norm_u(vec) - uT_ref / uTn))
    Q = (u0n + b_l1) / uT_used
    budget = ErrorBudget(eps_tol=eps_tol, eps_0=eps0 if mode == "budgeted" else 0.0,
                         eps_a=eps_a, eps_int=quad_err, eps_truncate=eps_trunc, Q=Q,
                         extra={"eps_b": eps_b, "eps_k": eps_k, "beta": beta, "mode": mode,
                                "march_tol": tol})
    state = EmulatedState(vector=vec, norm_factor=grid.l1 * D, budget=budget,
                          meta={"grid": grid, "tgrid": tgrid, "window": (a, T),
                                "with_u0": with_u0, "plan": plan, "uT_norm": uTn,
                                "uT_norm_used": uT_used, "error_vs_reference": err,
                                "march_steps": eng.n_steps})
    rep = lchs_resource_estimate("final_inhomo", gen.alpha_A, T,
                                 problem.eta if fast_forward else None, beta, eps_tol,
                                 {"u0_norm": u0n, "uT_norm": uT_used, "b_L1": b_l1})
    rep.counters = _grid_counters(
        grid, tgrid, select_cost=_select_cost(grid, aL, gen.alpha_A, span, eps0),
        aa_rounds=math.ceil(Q - 1e-12), T0=None if plan is None else plan.T0)
    return state, rep


# ---------------------------------------------------------------------------
# history states


def _history_M(T: float, h: float) -> int:
    M = round(T / h)
    if M < 1 or abs(M * h - T) > 1e-9 * max(1.0, T):
        raise PreconditionError("history states need T/h to be an integer")
    return M


def lchs_history(problem: ODEProblem, eps_tol: float, h: float, fast_forward: bool = False, *,
                 beta: float = DEFAULT_BETA, c_K: float | None = None, c_Q: float | None = None,
                 c_h2: float = 1.0, c_Q2: float = 1.0, c_M0: float = 1.0, c_r: float = 1.0,
                 mode: str = "ideal", seed: int = 0, smoothness_hint: float | None = None,
                 march_tol: float | None = None) -> tuple[EmulatedState, ResourceReport]:
    """Emulate the history state (+)_r u(rh), r = 0..M-1, one LCHS sum per row.

    Row r marches every U_k to rh, so source nodes after rh do not
    contribute; this is the indicator construction. With ``fast_forward``
    only the first M0 rows are kept (homogeneous), or each row keeps the
    sources in [(r - w) h, rh] and the u0 branch only while r < w
    (inhomogeneous). Rows are weighted by their normalisers so the output is
    proportional to the true history.
    """
    if fast_forward and problem.eta is None:
        raise PreconditionError("fast_forward needs a dissipative problem (eta set)")
    if mode not in ("ideal", "budgeted"):
        raise ValueError("mode must be 'ideal' or 'budgeted'")
    gen, T, d = problem.gen, problem.T, problem.dim
    M = _history_M(T, h)
    _check_L(gen, 0.0, T)
    times = np.arange(M) * h
    ref_rows = solve_reference(problem, times, 1e-11).states
    ref_norms = np.linalg.norm(ref_rows, axis=1)
    if not np.any(ref_norms > 0):
        raise DegenerateSolutionError("all-zero history")
    u0n = problem.u0_norm
    homo = problem.homogeneous
    alpha = max(gen.alpha_A, 1e-300)
    rms = math.sqrt(float(np.mean(ref_norms ** 2)))
    keep, w, plan, eps_trunc = M, M, None, 0.0
    if fast_forward:
        eps_trunc = eps_tol
        if homo:
            plan = plan_M0_history_homo(alpha, problem.eta, eps_tol, h, c_M0)
            keep = min(M, plan.M0)
        else:
            plan = plan_window_history_inhomo(alpha, problem.eta, eps_tol, u0n,
                                              max(problem.b_max, 1e-300), c_r)
            w = plan.w
    b_l1 = _b_l1(problem, 0.0, T)
    tgrid = None
    if homo:
        eps_a = min(0.5, rms * eps_tol / (4.0 * u0n))
        eps_k = eps_a
        Q = u0n / rms
    else:
        from .timemarching import compute_Q

        eps_a, eps_b = _inhomo_budget(eps_tol, rms, u0n, b_l1)
        eps_k = min(eps_a, 1.0 / (1.0 + b_l1 / eps_b))
        Q = compute_Q("history_inhomo", problem, h)
    cK, cQ = _resolve_constants(beta, eps_k, c_K, c_Q)
    aL = _alpha_L(gen, 0.0, T)
    grid = plan_k_grid(beta, eps_k, T, aL, cK, cQ)
    rows_t = times[:keep]
    t_end = float(rows_t[-1])
    imp_t, vecs = np.zeros(0), None
    if not homo:
        tgrid = plan_t_grid(problem, eps_b, beta, c_h2, c_Q2, K=grid.K,
                            smoothness_hint=smoothness_hint)
        sel = tgrid.ts <= t_end
        imp_t = tgrid.ts[sel]
        vecs = (tgrid.cprime[:, None] * tgrid.bkets)[sel]
    # per-row normalisers: the u0 branch while it is kept plus the sources in the window
    u0_rows = np.array([u0n if (homo or r < w) else 0.0 for r in range(M)])
    cum_c = np.zeros(M)
    if tgrid is not None:
        for r in range(M):
            lo = (r - w) * h if r >= w else -np.inf
            m = (tgrid.ts <= r * h) & (tgrid.ts >= lo)
            cum_c[r] = float(np.sum(tgrid.cprime[m]))
    D_rows = u0_rows + cum_c
    D_total = float(np.max(D_rows))
    eps0 = eps_tol * rms / (6.0 * grid.l1 * max(D_total, 1e-300))
    tol = march_tol if march_tol is not None else 0.1 * eps0 * max(D_total, 1e-300)
    kmax = float(np.max(np.abs(grid.ks)))
    u_start = problem.u0.astype(np.complex128)
    eng = _engine(gen, 0.0, t_end, kmax, tol, impulse_times=imp_t, rec_times=rows_t,
                  probe_u=u_start, probe_vecs=vecs)
    V = eng.march(grid.ks, u_start, vecs)[1]  # V[r, j] = branch k_j at rh
    if not homo and w < M:
        # drop u0 and sources older than w steps: V[r] - U(rh, (r-w)h) V[r-w]
        if gen.constant:
            P = [_ConstantEngine(gen, 0.0, h).matrices(grid.ks)] * (M - 1)
        else:
            P = [_GridEngine(gen, q * h, (q + 1) * h, kmax, tol).matrices(grid.ks)
                 for q in range(M - 1)]
        Vw = V.copy()
        for r in range(w, M):
            x = V[r - w]
            for q in range(r - w, r):
                x = np.einsum("kij,kj->ki", P[q], x)
            Vw[r] = V[r] - x
        V = Vw
    if mode == "budgeted":
        rng = np.random.default_rng(seed)
        V = _perturb_rows(V, np.broadcast_to((eps0 * D_rows[:keep])[:, None], V.shape[:2]), rng)
    rows = np.zeros((M, d), dtype=np.complex128)
    rows[:keep] = np.einsum("k,rki->ri", grid.cs, V)
    vec = rows.reshape(-1)
    if not np.linalg.norm(vec) > 0:
        raise DegenerateSolutionError("emulated history is zero")
    N_rows = grid.l1 * D_rows
    N_rows[keep:] = 0.0
    norm_factor = math.sqrt(float(np.sum(N_rows ** 2)))
    ref_vec = ref_rows.reshape(-1)
    err = float(np.linalg.norm(vec / np.linalg.norm(vec) - ref_vec / np.linalg.norm(ref_vec)))
    budget = ErrorBudget(eps_tol=eps_tol, eps_0=eps0 if mode == "budgeted" else 0.0,
                         eps_a=eps_a, eps_truncate=eps_trunc, Q=Q,
                         extra={"beta": beta, "mode": mode, "rows_kept": keep, "window": w,
                                "M": M, "eps_k": eps_k, "march_tol": tol})
    state = EmulatedState(vector=vec, norm_factor=norm_factor, budget=budget,
                          meta={"grid": grid, "tgrid": tgrid, "plan": plan,
                                "reference": ref_vec, "error_vs_reference": err,
                                "march_steps": eng.n_steps})
    scen = "history_homo" if homo else "history_inhomo"
    norms = {"u0_norm": u0n, "rms_norm": rms}
    if not homo:
        norms["Q_hist"] = Q
    rep = lchs_resource_estimate(scen, gen.alpha_A, T, problem.eta if fast_forward else None,
                                 beta, eps_tol, norms)
    rep.counters = _grid_counters(grid, tgrid, rows=keep, window=w,
                                  select_cost=_select_cost(grid, aL, gen.alpha_A, T, eps0),
                                  aa_rounds=math.ceil(Q - 1e-12))
    return state, rep


# ---------------------------------------------------------------------------
# resource estimator


def _norm_ratio(scenario: str, norms: dict) -> float:
    u0 = norms.get("u0_norm", 1.0)
    if scenario == "final_homo":
        return u0 / norms.get("uT_norm", 1.0)
    if scenario == "final_inhomo":
        return (u0 + norms.get("b_L1", 0.0)) / norms.get("uT_norm", 1.0)
    if scenario == "history_homo":
        return u0 / norms.get("rms_norm", 1.0)
    return norms.get("Q_hist", 1.0)


def lchs_resource_estimate(scenario: str, alpha_A: float, T: float, eta: float | None,
                           beta: float, eps_tol: float, norms: dict | None = None
                           ) -> ResourceReport:
    """HAM-T query count of the LCHS scenario (unit constants, natural logs).

    Semi-dissipative (``eta=None``): ratio alpha_A T lg(1/eps)^{1 + 1/beta}.
    Dissipative: ratio (alpha_A / eta) lg(1/eps)^{2 + 1/beta}; the homogeneous
    final state has no fast-forward and keeps the first form. The ratio is
    u0/uT, (u0 + ||b||_L1)/uT, u0 / rms_r ||u(rh)|| or the supplied ``Q_hist``
    depending on the scenario; state preparation costs ratio queries.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if min(alpha_A, T, eps_tol) <= 0:
        raise ValueError("lchs_resource_estimate needs positive inputs")
    if eta is not None and eta <= 0:
        raise ValueError("eta must be positive")
    norms = dict(norms or {})
    ratio = _norm_ratio(scenario, norms)
    if not ratio > 0:
        raise ValueError("norm ratio must be positive")
    L = lg(1.0 / eps_tol)
    note = ""
    if eta is None or scenario == "final_homo":
        if eta is not None:
            note = "no fast-forwarding for the homogeneous final state"
        ham = ratio * alpha_A * T * L ** (1.0 + 1.0 / beta)
    else:
        ham = ratio * (alpha_A / eta) * L ** (2.0 + 1.0 / beta)
    echo = {"method": "lchs", "alpha_A": alpha_A, "T": T, "eta": eta, "beta": beta,
            "eps_tol": eps_tol, "ratio": ratio, **norms}
    if note:
        echo["note"] = note
    return ResourceReport(ham_t_queries=float(ham), state_prep_queries=float(ratio),
                          aa_rounds=float(ratio), scenario=scenario, params_echo=echo)
