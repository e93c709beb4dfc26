"""Dissipation rate, decay checks and effective-time planners.

A generator is dissipative with rate eta when A(t) + A(t)^dagger <= -2 eta,
which forces ||T exp(int_{t0}^{t1} A)|| <= exp(-eta (t1 - t0)). The planners
below turn that decay into truncated simulation windows whose length does not
grow with the horizon T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateSolutionError, PreconditionError
from .linalg import (
    ODEProblem,
    TimeGenerator,
    _march_reference,
    opnorm,
    propagate_reference,
    solve_reference,
)


def estimate_eta(gen: TimeGenerator, t_samples: int = 1024,
                 t_range: tuple[float, float] = (0.0, 1.0)) -> float:
    """min over sampled t of -lambda_max((A + A^dagger)/2).

    A non-positive return value means the samples are not dissipative; it is
    not an error. The value is a sampled estimate, not a certified bound.
    """
    if t_samples < 2:
        raise ValueError("t_samples must be >= 2")
    ts = np.linspace(t_range[0], t_range[1], t_samples)
    Ls, _ = gen.split_samples(ts)
    return float(-np.max(np.linalg.eigvalsh(Ls)[:, -1]))


def decay_bound(eta: float, dt: float) -> float:
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return math.exp(-eta * dt)


def normalized_distance(x: np.ndarray, y: np.ndarray) -> float:
    """|| x/||x|| - y/||y|| ||."""
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise DegenerateSolutionError("normalized_distance needs non-zero vectors")
    return float(np.linalg.norm(x / nx - y / ny))


def normalization_bound(x: np.ndarray, x_tilde: np.ndarray) -> float:
    """2 ||x - x_tilde|| / ||x||, which dominates the normalised-state distance."""
    nx = np.linalg.norm(x)
    if nx == 0:
        raise DegenerateSolutionError("normalization_bound needs x != 0")
    return float(2.0 * np.linalg.norm(np.asarray(x) - np.asarray(x_tilde)) / nx)


@dataclass
class DecayReport:
    pairs: np.ndarray
    norms: np.ndarray
    bounds: np.ndarray
    tol: float

    @property
    def violations(self) -> np.ndarray:
        return self.norms - (self.bounds + self.tol)

    @property
    def max_violation(self) -> float:
        return float(max(0.0, np.max(self.violations))) if self.norms.size else 0.0

    @property
    def ok(self) -> bool:
        return self.max_violation == 0.0


def check_decay(problem: ODEProblem, sample_pairs: int = 10, tol: float = 1e-9,
                seed: int = 0, eta: float | None = None) -> DecayReport:
    """Compare ||Phi(t0, t1)|| with exp(-eta (t1 - t0)) on random pairs in [0, T]."""
    eta = problem.eta if eta is None else eta
    if eta is None:
        raise PreconditionError("check_decay needs an eta")
    rng = np.random.default_rng(seed)
    pairs = np.sort(rng.uniform(0.0, problem.T, size=(sample_pairs, 2)), axis=1)
    ref_tol = min(tol / 10, 1e-9)
    norms = np.array([opnorm(propagate_reference(problem.gen, a, b, ref_tol)) for a, b in pairs])
    bounds = np.array([decay_bound(eta, b - a) for a, b in pairs])
    return DecayReport(pairs=pairs, norms=norms, bounds=bounds, tol=tol)


# ---------------------------------------------------------------------------
# planners


@dataclass(frozen=True)
class TruncationPlan:
    kind: str
    eps_truncate: float
    T0: float | None = None
    M0: int | None = None
    r: int | None = None
    w: int | None = None
    full_horizon: bool = False
    floored: bool = False
    constant: float = 1.0
    notes: dict = field(default_factory=dict)


KINDS = ("final_inhomo", "history_homo", "history_inhomo")


def plan_T0_final(eta: float, eps_truncate: float, b_max: float, uT_norm: float,
                  u0_norm: float, T: float, c_T0: float = 1.0,
                  min_window: float = 0.0, uT_source: str = "supplied") -> TruncationPlan:
    """Effective time for the final inhomogeneous state.

    Below the threshold T < log(4 ||u0|| / (eps ||u(T)||)) / eta the whole
    horizon is kept. Otherwise T0 = min(T, c_T0 log(b_max / (eta eps ||u(T)||)) / eta),
    floored at ``min_window``.
    """
    if min(eta, eps_truncate, b_max, uT_norm, T, c_T0) <= 0 or u0_norm < 0:
        raise ValueError("plan_T0_final needs positive inputs")
    notes = {"uT_norm": uT_norm, "uT_source": uT_source}
    if u0_norm > 0:
        threshold = math.log(4.0 * u0_norm / (eps_truncate * uT_norm)) / eta
    else:
        threshold = -math.inf
    notes["threshold"] = threshold
    if T < threshold:
        return TruncationPlan(kind="final_inhomo", eps_truncate=eps_truncate, T0=float(T),
                              full_horizon=True, constant=c_T0, notes=notes)
    raw = c_T0 * math.log(b_max / (eta * eps_truncate * uT_norm)) / eta
    floored = raw <= min_window
    T0 = min(float(T), max(raw, min_window))
    return TruncationPlan(kind="final_inhomo", eps_truncate=eps_truncate, T0=T0,
                          floored=floored, constant=c_T0, notes=notes)


def plan_M0_history_homo(alpha_A: float, eta: float, eps_truncate: float, h: float,
                         c_M0: float = 1.0) -> TruncationPlan:
    """M0 = ceil(c (alpha_A / eta) log(1/eps)), at least 1; T0 = M0 h."""
    if min(alpha_A, eta, eps_truncate, h, c_M0) <= 0:
        raise ValueError("plan_M0_history_homo needs positive inputs")
    raw = c_M0 * (alpha_A / eta) * math.log(1.0 / eps_truncate)
    M0 = max(1, math.ceil(raw - 1e-12))
    return TruncationPlan(kind="history_homo", eps_truncate=eps_truncate, M0=M0, T0=M0 * h,
                          floored=raw < 1, constant=c_M0)


def plan_window_history_inhomo(alpha_A: float, eta: float, eps_truncate: float,
                               u0_norm: float, b_max: float, c_r: float = 1.0) -> TruncationPlan:
    """r = w = ceil(c (alpha_A/eta) log(alpha_A (||u0|| + b_max/eta) / (eps b_max))), at least 1."""
    if min(alpha_A, eta, eps_truncate, b_max, c_r) <= 0 or u0_norm < 0:
        raise ValueError("plan_window_history_inhomo needs positive inputs")
    arg = alpha_A * (u0_norm + b_max / eta) / (eps_truncate * b_max)
    raw = c_r * (alpha_A / eta) * math.log(arg) if arg > 1 else 0.0
    r = max(1, math.ceil(raw - 1e-12))
    return TruncationPlan(kind="history_inhomo", eps_truncate=eps_truncate, r=r, w=r,
                          floored=raw < 1, constant=c_r)


# ---------------------------------------------------------------------------
# validation of the final-state truncation


def truncated_final_state(problem: ODEProblem, T0: float, tol: float = 1e-10) -> np.ndarray:
    """int_{T-T0}^{T} Phi(t, T) b(t) dt, i.e. the source-only solution on the window."""
    T = problem.T
    T0 = min(max(T0, 0.0), T)
    if T0 == 0.0:
        return np.zeros(problem.dim, dtype=np.complex128)
    p = replace(problem, u0=np.zeros(problem.dim, dtype=np.complex128))
    return _march_reference(p, np.array([T]), tol, t_start=T - T0)[-1]


def truncated_solution_error(problem: ODEProblem, plan: TruncationPlan | float,
                             tol: float = 1e-10) -> float:
    """|| |u_trunc(T)> - |u(T)> || for the window [T - T0, T] (u0 dropped).

    A full-horizon plan keeps u0 and so has zero truncation error. An empty
    window returns the worst-case value 2 (the truncated vector is zero).
    """
    if isinstance(plan, TruncationPlan):
        T0 = plan.T0 if plan.T0 is not None else problem.T
        full = plan.full_horizon
    else:
        T0, full = float(plan), False
    uT = solve_reference(problem, [problem.T], tol).states[-1]
    if np.linalg.norm(uT) < 1e-300:
        raise DegenerateSolutionError("||u(T)|| underflows")
    if full:
        return 0.0
    ut = truncated_final_state(problem, T0, tol)
    if np.linalg.norm(ut) == 0:
        return 2.0
    return normalized_distance(ut, uT)


def surrogate_uT_norm(problem: ODEProblem, tol: float = 1e-8) -> float:
    """A slightly pessimistic ||u(T)|| from a coarse reference solve.

    The value is rounded down on a 0.01-decade grid, so it never exceeds the
    true norm and is identical for horizons whose solutions agree to ~1%.
    """
    uT = solve_reference(problem, [problem.T], tol).states[-1]
    n = float(np.linalg.norm(uT))
    if n < 1e-300:
        raise DegenerateSolutionError("||u(T)|| underflows")
    return 10.0 ** (round(math.log10(n), 2) - 0.005)


def plan_T0_for_problem(problem: ODEProblem, eps_truncate: float, c_T0: float = 1.0, *,
                        certified: bool = False, uT_norm: float | None = None,
                        min_window: float = 0.0, tol: float = 1e-10,
                        grid: float = 1.0 / 64, max_doublings: int = 8) -> TruncationPlan:
    """plan_T0_final with problem-derived norms and an optional certified constant.

    In certified mode the constant starts at ``c_T0`` and is doubled until
    :func:`truncated_solution_error` meets ``eps_truncate``, then bisected back
    down on a grid of ``grid`` to the smallest passing value.
    """
    if problem.eta is None:
        raise PreconditionError("fast-forward planning needs a dissipative problem")
    source = "supplied"
    if uT_norm is None:
        uT_norm, source = surrogate_uT_norm(problem), "surrogate"
    b_max = problem.b_max if problem.b_max > 0 else 1.0

    def make(c: float) -> TruncationPlan:
        return plan_T0_final(problem.eta, eps_truncate, b_max, uT_norm, problem.u0_norm,
                             problem.T, c, min_window, source)

    plan = make(c_T0)
    if not certified or plan.full_horizon:
        return plan
    err = truncated_solution_error(problem, plan, tol)
    if err <= eps_truncate:
        return replace(plan, notes={**plan.notes, "certified_error": err})
    lo, hi = c_T0, c_T0
    for _ in range(max_doublings):
        hi *= 2
        plan = make(hi)
        err = truncated_solution_error(problem, plan, tol)
        if err <= eps_truncate:
            break
        lo = hi
    else:
        return replace(plan, notes={**plan.notes, "certified_error": err, "certified": False})
    best, best_err = plan, err
    while hi - lo > grid:
        mid = math.floor((lo + hi) / 2 / grid) * grid
        if mid <= lo:
            break
        cand = make(mid)
        e = truncated_solution_error(problem, cand, tol)
        if e <= eps_truncate:
            hi, best, best_err = mid, cand, e
        else:
            lo = mid
    return replace(best, notes={**best.notes, "certified_error": best_err})
