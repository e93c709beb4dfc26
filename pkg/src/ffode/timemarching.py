"""Time-marching emulation.

The propagator over [0, T] is split into short steps. Each step is a
truncated Dyson series block, and uniform amplitude amplification rescales
its normalisation to ||Xi|| / (1 - delta). The product of the blocks is then
applied to the initial state. Inhomogeneous terms go through Duhamel's
principle and a panelled Gauss-Legendre rule whose panels coincide with the
steps, so each quadrature node starts its own shifted grid of steps. The
generator is padded with zero after the target time, so overshooting steps
act as the identity.

Emulated blocks carry their true truncation error plus a random
perturbation of the size the error schedule allows. Outputs are validated
against the reference solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg

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
    StepBlock,
    lg,
    llg,
    random_perturbation,
)
from .errors import DegenerateSolutionError, PreconditionError, StepSizeError
from .linalg import (
    ODEProblem,
    TimeGenerator,
    _march_reference,
    opnorm,
    propagate_reference,
    solve_reference,
)
from .quadrature import gauss_legendre, plan_panels

REF_TOL = 1e-12
MAX_ORDER = 30
MAX_NODES = 64


# ---------------------------------------------------------------------------
# single steps


@lru_cache(maxsize=64)
def _collocation(q: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss nodes/weights on [0, 1] and S_ij = int_0^{x_i} l_j(s) ds for the
    Lagrange basis l_j on those nodes."""
    rule = gauss_legendre(q, 0.0, 1.0)
    y = 2.0 * rule.nodes - 1.0
    V = npleg.legvander(y, q - 1)
    C = np.linalg.solve(V, np.eye(q))
    S = np.empty((q, q))
    for j in range(q):
        S[:, j] = 0.5 * npleg.legval(y, npleg.legint(C[:, j], lbnd=-1))
    return rule.nodes, rule.weights, S


def _effective_h(gen: TimeGenerator, t: float, h: float) -> float:
    if gen.zero_after is None:
        return h
    return min(h, max(0.0, gen.zero_after - t))


def dyson_step(gen: TimeGenerator, t: float, h: float, order: int,
               nodes_per_dim: int | None = None, c_step: float = 1.0,
               reference: np.ndarray | None = None, ref_tol: float = REF_TOL) -> StepBlock:
    """Truncated Dyson series sum_{m <= order} D_m for the step [t, t + h].

    The m-fold time-ordered integrals are evaluated by nested Gauss-Legendre
    collocation with ``nodes_per_dim`` points (default ``order``).
    ``eps_inject`` is the measured spectral distance to the reference
    propagator.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if gen.alpha_A * h > c_step * (1 + 1e-12):
        raise StepSizeError(
            f"alpha_A*h = {gen.alpha_A * h:.4g} exceeds the step limit {c_step}")
    d = gen.dim
    he = _effective_h(gen, t, h)
    total = np.eye(d, dtype=np.complex128)
    if he > 0:
        q = nodes_per_dim or max(order, 2)
        x, w, S = _collocation(q)
        A = gen.samples(t + he * x)
        D = np.broadcast_to(np.eye(d, dtype=np.complex128), (q, d, d))
        for _ in range(order):
            AD = A @ D
            total = total + he * np.tensordot(w, AD, axes=1)
            D = he * np.tensordot(S, AD, axes=1)
    if reference is None:
        reference = propagate_reference(gen, t, t + he, ref_tol)
    eps = opnorm(total - reference)
    return StepBlock(matrix=total, alpha=opnorm(total) * (1 + 1e-12), eps_inject=eps,
                     reference=reference,
                     meta={"t": t, "h": h, "order": order, "nodes": nodes_per_dim or max(order, 2),
                           "eps_dyson": eps})


def order_for_eps0(eps_0: float, c_order: float = 1.0) -> int:
    """ceil(c log(1/eps0) / log(max(2, log(1/eps0)))), at least 2."""
    if not 0 < eps_0 < 1:
        raise ValueError("eps_0 must lie in (0, 1)")
    L = math.log(1.0 / eps_0)
    return max(2, math.ceil(c_order * L / math.log(max(2.0, L)) - 1e-12))


def amplify_step(block: StepBlock, delta: float, eps_a: float,
                 rng: np.random.Generator | None = None) -> StepBlock:
    """Uniform amplitude amplification of a block to alpha' = ||Xi|| / (1 - delta).

    A random perturbation of norm ``eps_a * ||Xi||`` models the amplification
    error. The query factor (alpha / (delta ||Xi||)) log(alpha / (||Xi|| eps_a))
    is recorded in ``meta['aa_factor']``.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    rng = rng or np.random.default_rng(0)
    xi = opnorm(block.matrix)
    d = block.matrix.shape[0]
    E = random_perturbation(d, eps_a * xi, rng)
    M = block.matrix + E
    alpha = max(xi / (1.0 - delta), opnorm(M) * (1 + 1e-12))
    if xi > 0:
        ratio = block.alpha / xi
        factor = ratio / delta * (lg(ratio / eps_a) if eps_a > 0 else 1.0)
    else:
        factor = 0.0
    eps = opnorm(M - block.reference) if block.reference is not None else block.eps_inject + opnorm(E)
    meta = {**block.meta, "eps_amp": eps_a * xi, "aa_factor": factor, "delta": delta,
            "alpha_before": block.alpha}
    return StepBlock(matrix=M, alpha=alpha, eps_inject=eps, reference=block.reference, meta=meta)


def delta_schedule(scenario: str, alpha_A: float, T: float, eta: float | None = None,
                   c_delta: float = 1.0) -> float:
    """delta = 1/(alpha_A T) capped at 1/2, or min(1/2, c_delta eta / alpha_A) when dissipative."""
    if alpha_A <= 0 or T <= 0:
        raise ValueError("delta_schedule needs positive inputs")
    dissipative = scenario in ("dissipative", "dissi") or (
        eta is not None and scenario not in ("semi", "semi-dissipative", "non-dissipative"))
    if dissipative:
        if eta is None or eta <= 0:
            raise ValueError("dissipative schedule needs eta > 0")
        return min(0.5, c_delta * eta / alpha_A)
    return min(0.5, 1.0 / (alpha_A * T))


# ---------------------------------------------------------------------------
# block factory shared by all scenarios


@dataclass
class _Composite:
    matrix: np.ndarray
    alpha: float
    ref: np.ndarray
    ref_norm_prod: float
    orders: list


class _Blocks:
    """Builds (composite) step blocks in two phases: references, then emulated blocks.

    A composite block covers [t, t + h] with ``p`` equal sub-steps, each short
    enough for the Dyson series.
    """

    def __init__(self, gen: TimeGenerator, ref_tol: float = REF_TOL):
        self.gen = gen
        self.ref_tol = ref_tol
        self._refs: dict = {}

    def substeps(self, h: float) -> int:
        return max(1, math.ceil(self.gen.alpha_A * h - 1e-12))

    def _key(self, gen, t, h):
        return (gen.zero_after, round(t, 14), round(h, 14))

    def sub_ref(self, gen: TimeGenerator, t: float, h: float) -> np.ndarray:
        k = self._key(gen, t, h)
        if k not in self._refs:
            he = _effective_h(gen, t, h)
            self._refs[k] = propagate_reference(gen, t, t + he, self.ref_tol)
        return self._refs[k]

    def ref_norms(self, gen: TimeGenerator, t: float, h: float) -> list[float]:
        p = self.substeps(h)
        hs = h / p
        return [opnorm(self.sub_ref(gen, t + i * hs, hs)) for i in range(p)]

    def configure(self, eps0: float, eps_a: float, delta: float, c_order: float,
                  rng: np.random.Generator, inject: bool, fixed_order: int | None = None):
        self.eps0, self.eps_a, self.delta = eps0, eps_a, delta
        self.rng, self.inject = rng, inject
        if fixed_order is not None:
            self.planned = fixed_order
        elif eps0 > 0:
            self.planned = order_for_eps0(min(eps0, 0.5), c_order)
        else:
            self.planned = 12
        self.used = []
        self.aa_factors = []

    def block(self, gen: TimeGenerator, t: float, h: float) -> _Composite:
        p = self.substeps(h)
        hs = h / p
        d = gen.dim
        M = np.eye(d, dtype=np.complex128)
        R = np.eye(d, dtype=np.complex128)
        alpha, rn = 1.0, 1.0
        orders = []
        for i in range(p):
            ti = t + i * hs
            ref = self.sub_ref(gen, ti, hs)
            order = self.planned
            blk = dyson_step(gen, ti, hs, order, reference=ref)
            while self.inject and blk.eps_inject > self.eps0 and order < MAX_ORDER:
                order += 1
                blk = dyson_step(gen, ti, hs, order, reference=ref)
            if _effective_h(gen, ti, hs) > 0:
                blk = amplify_step(blk, self.delta, self.eps_a if self.inject else 0.0, self.rng)
                self.aa_factors.append(blk.meta["aa_factor"])
            orders.append(order)
            M = blk.matrix @ M
            R = ref @ R
            alpha *= blk.alpha
            rn *= opnorm(ref)
        self.used.extend(orders)
        return _Composite(M, alpha, R, rn, orders)


def _check_u(uT: np.ndarray) -> float:
    n = float(np.linalg.norm(uT))
    if not np.isfinite(n) or n < 1e-300:
        raise DegenerateSolutionError("||u(T)|| underflows; Q is not finite")
    return n


def _budget(eps_tol: float, alpha_T: float, Q: float, min_phi: float, inject: bool,
            c_all: float = 1.0) -> tuple[float, float, float]:
    if not inject:
        return 0.0, 0.0, 0.0
    # at least one step is always taken, so alpha_T is floored at 1
    eps_all = eps_tol / (c_all * max(alpha_T, 1.0) * Q)
    return eps_all, eps_all * min_phi / 3.0, eps_all / 3.0


def _report_counters(blocks: _Blocks, **extra) -> dict:
    c = {"dyson_order_planned": blocks.planned}
    c.update(extra)
    return c


# ---------------------------------------------------------------------------
# final state, homogeneous


def tm_final_homogeneous(problem: ODEProblem, eps_tol: float, *, seed: int = 0,
                         c_order: float = 1.0, inject: bool = True,
                         fixed_order: int | None = None, delta: float | None = None,
                         dissipative_delta: bool = False,
                         ref_tol: float = REF_TOL) -> tuple[EmulatedState, ResourceReport]:
    """Emulate prod_l P_l |u0> with M = ceil(alpha_A T) amplified Dyson steps."""
    if not problem.homogeneous:
        raise PreconditionError("tm_final_homogeneous needs b == 0")
    gen, T = problem.gen, problem.T
    alpha = max(gen.alpha_A, 1e-300)
    M = max(1, math.ceil(alpha * T - 1e-12))
    h = T / M
    blocks = _Blocks(gen, ref_tol)
    starts = [l * h for l in range(M)]
    phi_norms = [blocks.ref_norms(gen, t, h)[0] for t in starts]
    u0 = problem.u0
    u0n = problem.u0_norm
    if u0n == 0:
        raise DegenerateSolutionError("u0 = 0")
    ket0 = u0 / u0n
    ref_vec = ket0.copy()
    for t in starts:
        ref_vec = blocks.sub_ref(gen, t, h) @ ref_vec
    uTn = _check_u(ref_vec) * u0n
    prod = float(np.prod(phi_norms))
    Q = prod * u0n / uTn
    eps_all, eps0, eps_a = _budget(eps_tol, alpha * T, Q, min(phi_norms), inject)
    if delta is None:
        delta = (delta_schedule("dissipative", alpha, T, problem.eta)
                 if dissipative_delta and problem.eta else delta_schedule("semi", alpha, T))
    blocks.configure(eps0, eps_a, delta, c_order, np.random.default_rng(seed), inject, fixed_order)
    v = ket0.astype(np.complex128)
    norm_factor = 1.0
    alphas = []
    for t in starts:
        c = blocks.block(gen, t, h)
        v = c.matrix @ v
        norm_factor *= c.alpha
        alphas.append(c.alpha)
    gamma = prod * ((1 + eps_all) ** M - 1)
    budget = ErrorBudget(eps_tol=eps_tol, eps_all=eps_all, eps_0=eps0, eps_a=eps_a, Q=Q,
                         extra={"gamma_bound": gamma,
                                "normalization_bound": 2 * gamma / (uTn / u0n),
                                "delta": delta, "steps": M})
    state = EmulatedState(vector=v, norm_factor=norm_factor, budget=budget,
                          meta={"alphas": alphas, "phi_norms": phi_norms,
                                "phi_norm_product": prod, "reference_unit": ref_vec,
                                "dyson_orders_used": sorted(set(blocks.used)),
                                "uT_norm": uTn})
    rep = tm_resource_estimate("final_homo", alpha, T, None, eps_tol, Q,
                               {"u0_norm": u0n, "uT_norm": uTn})
    rep.counters = _report_counters(blocks, steps=M, aa_rounds=math.ceil(Q - 1e-12))
    return state, rep


# ---------------------------------------------------------------------------
# final state, inhomogeneous


def _ideal_quadrature(problem: ODEProblem, a: float, nodes: np.ndarray, weights: np.ndarray,
                      with_u0: bool, tol: float) -> np.ndarray:
    """u0-branch plus sum_s c_s Phi(t_s, T) b(t_s), integrated by the reference marcher."""
    bvals = problem.b_samples(nodes) * weights[:, None]
    u_start = problem.u0 if with_u0 else np.zeros(problem.dim, dtype=np.complex128)
    p = replace(problem, b=None, b_vec=None, u0=u_start)
    return _march_reference(p, np.array([problem.T]), tol, t_start=a,
                            impulse_times=nodes, impulse_vecs=bvals)[-1]


def tm_final_inhomogeneous(problem: ODEProblem, eps_tol: float, fast_forward: bool = False, *,
                           seed: int = 0, c_order: float = 1.0, c_nodes: float = 1.0,
                           c_T0: float = 1.0, certified: bool = True, inject: bool = True,
                           ref_tol: float = REF_TOL) -> tuple[EmulatedState, ResourceReport]:
    """Emulate u(T) = Phi(0,T) u0 + sum_{j,s} c_s Phi(t_s + jh, T) b(t_s + jh).

    With ``fast_forward`` (dissipative problems only) the sum is restricted
    to [T - T0, T] with T0 from the certified effective-time planner and the
    u0 branch is dropped.
    """
    if fast_forward and problem.eta is None:
        raise PreconditionError("fast_forward needs a dissipative problem (eta set)")
    if problem.homogeneous:
        return tm_final_homogeneous(problem, eps_tol, seed=seed, c_order=c_order,
                                    inject=inject, ref_tol=ref_tol)
    gen, T = problem.gen, problem.T
    alpha = max(gen.alpha_A, 1e-300)
    uT_ref = solve_reference(problem, [T], 1e-11).states[-1]
    uTn = _check_u(uT_ref)
    plan = None
    eps_trunc = 0.0
    a, with_u0 = 0.0, True
    uT_used = uTn
    if fast_forward:
        eps_trunc = eps_tol / 2
        uT_used = surrogate_uT_norm(problem)
        plan = plan_T0_for_problem(problem, eps_trunc, c_T0, certified=certified,
                                   uT_norm=uT_used, min_window=min(T, 1.0 / alpha))
        if not plan.full_horizon:
            a, with_u0 = T - plan.T0, False
    span = T - a
    M = max(1, math.ceil(alpha * span - 1e-12))
    h = span / M
    remaining = eps_tol - eps_trunc
    eps_quad, eps_blocks = remaining / 2, remaining / 2
    # quadrature: planner n, raised until the ideal sum meets its share
    pp = plan_panels(span, alpha, eps_quad, 1.0, c_nodes)
    n = pp.n
    target = uT_ref if with_u0 else truncated_final_state(problem, span, 1e-11)
    while True:
        rule = gauss_legendre(n, 0.0, h)
        nodes = (a + np.arange(M)[:, None] * h + rule.nodes[None, :]).reshape(-1)
        wts = np.tile(rule.weights, M)
        ideal = _ideal_quadrature(problem, a, nodes, wts, with_u0, 1e-11)
        quad_err = 2 * np.linalg.norm(ideal - target) / uTn
        if quad_err <= eps_quad or n >= MAX_NODES:
            break
        n += 1
    gpad = gen.padded(T)
    blocks = _Blocks(gpad, ref_tol)
    bvals = problem.b_samples(nodes).reshape(M, n, -1)
    bnorm = np.linalg.norm(bvals, axis=2)
    # ideal normaliser and Q
    norms0 = [blocks.ref_norms(gpad, a + k * h, h)[0] for k in range(M)] if with_u0 else []
    norms_s = np.array([[blocks.ref_norms(gpad, a + rule.nodes[s] + k * h, h)[0]
                         for k in range(M)] for s in range(n)])
    tail = np.cumprod(norms_s[:, ::-1], axis=1)[:, ::-1]  # prod_{l >= k}
    D_ideal = (float(np.prod(norms0)) * problem.u0_norm if with_u0 else 0.0)
    D_ideal += float(np.sum(rule.weights[:, None] * bnorm.T * tail))
    csum = float(np.sum(rule.weights[None, :] * bnorm))
    Q = D_ideal / uT_used
    Q0 = D_ideal / ((problem.u0_norm if with_u0 else 0.0) + csum)
    min_phi = float(min(np.min(norms_s), min(norms0) if norms0 else np.inf))
    eps_all, eps0, eps_a = _budget(eps_blocks, alpha * span, Q, min_phi, inject)
    delta = delta_schedule("semi", alpha, span)
    blocks.configure(eps0, eps_a, delta, c_order, np.random.default_rng(seed), inject)
    vec = np.zeros(problem.dim, dtype=np.complex128)
    denom = 0.0
    if with_u0 and problem.u0_norm > 0:
        v = problem.u0 / problem.u0_norm
        a_int = 1.0
        for k in range(M):
            c = blocks.block(gpad, a + k * h, h)
            v = c.matrix @ v
            a_int *= c.alpha
        vec += problem.u0_norm * v
        denom += problem.u0_norm * a_int
    for s in range(n):
        w = np.zeros(problem.dim, dtype=np.complex128)
        alphas_s = []
        for k in range(M):
            c = blocks.block(gpad, a + rule.nodes[s] + k * h, h)
            w = c.matrix @ (w + rule.weights[s] * bvals[k, s])
            alphas_s.append(c.alpha)
        vec += w
        # branch j is normalised by the product of alphas from step j to the end
        tail_alpha = np.cumprod(np.array(alphas_s)[::-1])[::-1]
        denom += float(np.sum(rule.weights[s] * bnorm[:, s] * tail_alpha))
    budget = ErrorBudget(eps_tol=eps_tol, eps_all=eps_all, eps_0=eps0, eps_a=eps_a,
                         eps_int=float(quad_err), eps_truncate=eps_trunc, Q=Q,
                         extra={"Q0_measured": Q0, "delta": delta, "nodes": n, "steps": M,
                                "quad_share": eps_quad, "block_share": eps_blocks})
    err = float(np.linalg.norm(vec / np.linalg.norm(vec) - uT_ref / uTn))
    state = EmulatedState(vector=vec, norm_factor=denom, budget=budget,
                          meta={"window": (a, T), "with_u0": with_u0, "plan": plan,
                                "error_vs_reference": err, "uT_norm": uTn,
                                "uT_norm_used": uT_used,
                                "dyson_orders_used": sorted(set(blocks.used))})
    dissipative = fast_forward
    rep = tm_resource_estimate("final_inhomo", alpha, T, problem.eta if dissipative else None,
                               eps_tol, Q, {"u0_norm": problem.u0_norm, "uT_norm": uT_used,
                                            "b_max": problem.b_max})
    rep.counters = _report_counters(blocks, steps=M, panels=M, quad_nodes_planned=pp.n,
                                    aa_rounds=math.ceil(Q - 1e-12),
                                    T0=None if plan is None else plan.T0)
    return state, rep


# ---------------------------------------------------------------------------
# history states


def _history_M(T: float, h: float) -> int:
    M = round(T / h)
    if M < 1 or abs(M * h - T) > 1e-9 * max(1.0, T):
        raise PreconditionError("history states need T/h to be an integer")
    return M


def reference_history(problem: ODEProblem, h: float, tol: float = 1e-11) -> np.ndarray:
    """Rows u(kh), k = 0..M-1."""
    M = _history_M(problem.T, h)
    return solve_reference(problem, np.arange(M) * h, tol).states


def tm_history(problem: ODEProblem, eps_tol: float, h: float, fast_forward: bool = False, *,
               seed: int = 0, c_order: float = 1.0, c_nodes: float = 1.0, c_M0: float = 1.0,
               c_r: float = 1.0, inject: bool = True,
               ref_tol: float = REF_TOL) -> tuple[EmulatedState, ResourceReport]:
    """Emulate the history state proportional to (+)_k ||u(kh)|| |u(kh)>, k < M = T/h.

    The index register is prepared with amplitudes proportional to each
    row's normaliser, so the good branch is proportional to the true history.
    """
    if fast_forward and problem.eta is None:
        raise PreconditionError("fast_forward needs a dissipative problem (eta set)")
    M = _history_M(problem.T, h)
    if problem.homogeneous:
        return _tm_history_homo(problem, eps_tol, h, M, fast_forward, seed, c_order, c_M0,
                                inject, ref_tol)
    return _tm_history_inhomo(problem, eps_tol, h, M, fast_forward, seed, c_order, c_nodes,
                              c_r, inject, ref_tol)


def _pack(rows: list[np.ndarray], M: int, d: int) -> np.ndarray:
    out = np.zeros((M, d), dtype=np.complex128)
    for k, r in enumerate(rows):
        out[k] = r
    return out


def _tm_history_homo(problem, eps_tol, h, M, fast_forward, seed, c_order, c_M0, inject,
                     ref_tol):
    gen = problem.gen
    alpha = max(gen.alpha_A, 1e-300)
    u0n = problem.u0_norm
    if u0n == 0:
        raise DegenerateSolutionError("all-zero history")
    ref_rows = reference_history(problem, h)
    ref_norms = np.linalg.norm(ref_rows, axis=1)
    Q = u0n / math.sqrt(float(np.mean(ref_norms ** 2)))
    keep, plan = M, None
    if fast_forward:
        plan = plan_M0_history_homo(alpha, problem.eta, eps_tol, h, c_M0)
        keep = min(M, plan.M0)
    blocks = _Blocks(gen, ref_tol)
    starts = [l * h for l in range(keep - 1)]
    min_phi = min((min(blocks.ref_norms(gen, t, h)) for t in starts), default=1.0)
    span = keep * h
    eps_all, eps0, eps_a = _budget(eps_tol, alpha * span, Q, min_phi, inject)
    delta = delta_schedule("semi", alpha, span)
    blocks.configure(eps0, eps_a, delta, c_order, np.random.default_rng(seed), inject)
    v = problem.u0 / u0n
    rows, weights = [v.copy()], [1.0]
    a_int = 1.0
    for t in starts:
        c = blocks.block(gen, t, h)
        v = c.matrix @ v
        a_int *= c.alpha
        rows.append(v.copy())
        weights.append(a_int)
    vec = _pack(rows, M, problem.dim).reshape(-1)
    norm_factor = math.sqrt(float(np.sum(np.square(weights))))
    budget = ErrorBudget(eps_tol=eps_tol, eps_all=eps_all, eps_0=eps0, eps_a=eps_a,
                         eps_truncate=eps_tol if fast_forward else 0.0, Q=Q,
                         extra={"delta": delta, "rows_kept": keep, "M": M})
    state = EmulatedState(vector=vec, norm_factor=norm_factor, budget=budget,
                          meta={"plan": plan, "reference": ref_rows.reshape(-1),
                                "dyson_orders_used": sorted(set(blocks.used))})
    rep = tm_resource_estimate("history_homo", alpha, problem.T,
                               problem.eta if fast_forward else None, eps_tol, Q,
                               {"u0_norm": u0n})
    rep.counters = _report_counters(blocks, rows=keep, steps=max(0, keep - 1),
                                    substeps=blocks.substeps(h),
                                    aa_rounds=math.ceil(Q - 1e-12))
    return state, rep


def _tm_history_inhomo(problem, eps_tol, h, M, fast_forward, seed, c_order, c_nodes, c_r,
                       inject, ref_tol):
    gen = problem.gen
    alpha = max(gen.alpha_A, 1e-300)
    d = problem.dim
    ref_rows = reference_history(problem, h)
    if not np.any(np.linalg.norm(ref_rows, axis=1) > 0):
        raise DegenerateSolutionError("all-zero history")
    Q = compute_Q("history_inhomo", problem, h)
    r, plan = M, None
    if fast_forward:
        plan = plan_window_history_inhomo(alpha, problem.eta, eps_tol, problem.u0_norm,
                                          max(problem.b_max, 1e-300), c_r)
        r = plan.r
    eps_quad = eps_blocks = eps_tol / 2
    # quadrature calibrated on the un-windowed history
    n = plan_panels(problem.T, alpha, eps_quad, 1.0, c_nodes).n
    n_planned = n
    ref_vec = ref_rows.reshape(-1)
    ref_norm = float(np.linalg.norm(ref_vec))
    p_imp = replace(problem, b=None, b_vec=None)
    times = np.arange(M) * h
    while True:
        rule = gauss_legendre(n, 0.0, h)
        nodes = (np.arange(M)[:, None] * h + rule.nodes[None, :]).reshape(-1)
        wts = np.tile(rule.weights, M)
        bv = problem.b_samples(nodes) * wts[:, None]
        ideal = _march_reference(p_imp, times, 1e-11, impulse_times=nodes, impulse_vecs=bv)
        quad_err = 2 * np.linalg.norm(ideal.reshape(-1) - ref_vec) / ref_norm
        if quad_err <= eps_quad or n >= MAX_NODES:
            break
        n += 1
    bvals = problem.b_samples(nodes).reshape(M, n, d)
    bnorm = np.linalg.norm(bvals, axis=2)
    blocks = _Blocks(gen, ref_tol)
    pads = {k: gen.padded(k * h) for k in range(1, M)}
    u0n = problem.u0_norm
    # reference norms for eps0
    min_phi = 1.0
    for k in range(M - 1):
        min_phi = min(min_phi, *blocks.ref_norms(gen, k * h, h))
        for s in range(n):
            min_phi = min(min_phi, *blocks.ref_norms(gen, rule.nodes[s] + k * h, h))
    eps_all, eps0, eps_a = _budget(eps_blocks, alpha * problem.T, Q, min_phi, inject)
    delta = delta_schedule("semi", alpha, problem.T)
    blocks.configure(eps0, eps_a, delta, c_order, np.random.default_rng(seed), inject)
    # u0 branch blocks (unshifted grid)
    u0_blocks = [blocks.block(gen, k * h, h) for k in range(M - 1)] if u0n > 0 else []
    full = [[blocks.block(gen, rule.nodes[s] + k * h, h) for k in range(M - 2)]
            for s in range(n)] if M > 2 else [[] for _ in range(n)]
    part = [[blocks.block(pads[k + 1], rule.nodes[s] + k * h, h) for k in range(M - 1)]
            for s in range(n)]
    rows, norms = [], []
    for k in range(M):
        row = np.zeros(d, dtype=np.complex128)
        N = 0.0
        if u0n > 0 and (k < r):
            v = problem.u0 / u0n
            a_int = 1.0
            for l in range(k):
                v = u0_blocks[l].matrix @ v
                a_int *= u0_blocks[l].alpha
            row += u0n * v
            N += u0n * a_int
        j0 = max(0, k - r)
        for s in range(n):
            for j in range(j0, k):
                w = rule.weights[s] * bvals[j, s]
                a_int = 1.0
                for l in range(j, k - 1):
                    w = full[s][l].matrix @ w
                    a_int *= full[s][l].alpha
                w = part[s][k - 1].matrix @ w
                a_int *= part[s][k - 1].alpha
                row += w
                N += rule.weights[s] * bnorm[j, s] * a_int
        rows.append(row)
        norms.append(N)
    vec = _pack(rows, M, d).reshape(-1)
    norm_factor = math.sqrt(float(np.sum(np.square(norms))))
    budget = ErrorBudget(eps_tol=eps_tol, eps_all=eps_all, eps_0=eps0, eps_a=eps_a,
                         eps_int=float(quad_err), eps_truncate=eps_tol if fast_forward else 0.0,
                         Q=Q, extra={"delta": delta, "nodes": n, "window": r, "M": M})
    state = EmulatedState(vector=vec, norm_factor=norm_factor, budget=budget,
                          meta={"plan": plan, "reference": ref_vec,
                                "dyson_orders_used": sorted(set(blocks.used))})
    rep = tm_resource_estimate("history_inhomo", alpha, problem.T,
                               problem.eta if fast_forward else None, eps_tol, Q,
                               {"u0_norm": u0n, "b_max": problem.b_max})
    rep.counters = _report_counters(blocks, rows=M, window=r, quad_nodes_planned=n_planned,
                                    substeps=blocks.substeps(h),
                                    aa_rounds=math.ceil(Q - 1e-12))
    return state, rep


# ---------------------------------------------------------------------------
# normalisation factors and the resource estimator


def compute_Q(scenario: str, problem: ODEProblem, h: float | None = None,
              tol: float = 1e-11) -> float:
    """The scenario's Q from reference-solver norms.

    * final_homo: prod_l ||Phi_l|| ||u0|| / ||u(T)|| with M = ceil(alpha_A T) steps;
    * final_inhomo: Q0 (||b||_L1 + ||u0||) / ||u(T)|| with Q0 the largest tail
      product prod_{l >= j} ||Phi_l|| (at least 1 for non-contractive steps);
    * history_homo: ||u0|| / sqrt(mean_k ||u(kh)||^2);
    * history_inhomo: 1 / sqrt(mean_k ||u(kh)||^2 / (||u0|| + int_0^{kh} ||b||)^2),
      a 0/0 row (u0 = 0 at k = 0) contributing zero.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    gen, T = problem.gen, problem.T
    if scenario in ("final_homo", "final_inhomo"):
        M = max(1, math.ceil(gen.alpha_A * T - 1e-12))
        hh = T / M
        norms = [opnorm(propagate_reference(gen, l * hh, (l + 1) * hh, tol)) for l in range(M)]
        uT = _check_u(solve_reference(problem, [T], tol).states[-1])
        if scenario == "final_homo":
            return float(np.prod(norms)) * problem.u0_norm / uT
        tails = np.cumprod(np.array(norms)[::-1])
        Q0 = max(1.0, float(np.max(tails)))
        return Q0 * (problem.b_L1 + problem.u0_norm) / uT
    if h is None:
        raise ValueError("history Q needs h")
    M = _history_M(T, h)
    rows = solve_reference(problem, np.arange(M) * h, tol).states
    rn = np.linalg.norm(rows, axis=1)
    if scenario == "history_homo":
        ms = float(np.mean(rn ** 2))
        if ms == 0:
            raise DegenerateSolutionError("all-zero history")
        return problem.u0_norm / math.sqrt(ms)
    # cumulative int_0^{kh} ||b|| by fine Gauss-Legendre panels
    rule = gauss_legendre(16, 0.0, h)
    cum = [0.0]
    for k in range(1, M):
        ts = (k - 1) * h + rule.nodes
        cum.append(cum[-1] + float(rule.weights @ np.linalg.norm(problem.b_samples(ts), axis=1)))
    den = problem.u0_norm + np.array(cum)
    ratio = np.where(den > 0, rn / np.where(den > 0, den, 1.0), 0.0)
    ms = float(np.mean(ratio ** 2))
    if ms == 0:
        raise DegenerateSolutionError("all-zero history")
    return 1.0 / math.sqrt(ms)


def tm_resource_estimate(scenario: str, alpha_A: float, T: float, eta: float | None,
                         eps_tol: float, Q: float, norms: dict | None = None) -> ResourceReport:
    """HAM-T query count of the time-marching scenario (unit constants, natural logs).

    ``eta=None`` selects the semi-dissipative formula. ``norms`` may carry
    ``u0_norm``, ``uT_norm`` and ``b_max`` (needed by the dissipative
    inhomogeneous cells).
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    if min(alpha_A, T, eps_tol, Q) <= 0:
        raise ValueError("tm_resource_estimate needs positive inputs")
    norms = dict(norms or {})
    a, e = alpha_A, eps_tol
    note = ""
    if eta is None or scenario == "final_homo":
        if eta is not None:
            note = "no fast-forwarding for the homogeneous final state"
        x = a * T * Q / e
        ham = a * a * Q * T * T * lg(x) ** 2 / llg(x)
    elif scenario == "final_inhomo":
        u0 = norms.get("u0_norm", 0.0)
        bm = norms.get("b_max", 1.0)
        uT = norms.get("uT_norm", 1.0)
        y = Q * (u0 + bm) / (eta * e * uT)
        z = a * Q * lg(y) / (eta * e)
        ham = a * a * Q * lg(y) / eta ** 2 * lg(z) ** 2 / llg(z)
    elif scenario == "history_homo":
        z = a * Q * lg(Q / e) / (eta * e)
        ham = a * a * (Q / eta ** 2) * lg(Q / e) * lg(z) ** 2 / llg(z)
    else:
        u0 = norms.get("u0_norm", 0.0)
        bm = norms.get("b_max", 1.0)
        w = a * (u0 + bm / eta) / (e * bm)
        z = a * Q / (eta * e)
        ham = a * a * Q / eta ** 2 * lg(w) * lg(z) ** 2 / llg(z)
    echo = {"method": "time-marching", "alpha_A": alpha_A, "T": T, "eta": eta,
            "eps_tol": eps_tol, "Q": Q, **norms}
    if note:
        echo["note"] = note
    return ResourceReport(ham_t_queries=float(ham), state_prep_queries=float(Q),
                          aa_rounds=float(Q), scenario=scenario, params_echo=echo)
