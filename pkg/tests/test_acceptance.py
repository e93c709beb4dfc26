"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (see conftest.py) before asserting, so the
summary at the end of a pytest run lists every criterion.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from conftest import record
from ffode import lchs, timemarching
from ffode.applications import (
    laplacian_1d,
    make_reaction_diffusion,
    rd_eta_bound,
    rd_operators,
)
from ffode.dissipation import (
    check_decay,
    normalization_bound,
    normalized_distance,
    plan_T0_for_problem,
    truncated_solution_error,
)
from ffode.emulation import fidelity
from ffode.harness.config import preset_config
from ffode.harness.experiments import run
from ffode.linalg import (
    constant_generator,
    make_problem,
    opnorm,
    propagate_reference,
    random_generator,
    random_hermitian,
    solve_reference,
)
from ffode.quadrature import gauss_legendre, quadrature_error_bound


def _constant_dissipative(dim: int, eta: float, rng: np.random.Generator) -> np.ndarray:
    """-eta I - P + iH with P >= 0, so the largest eigenvalue of the Hermitian part is <= -eta."""
    X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    P = X @ X.conj().T
    P = 0.5 * P / opnorm(P)
    return -eta * np.eye(dim) - P + 1j * random_hermitian(dim, rng, 0.7)


def test_criterion_1_decay_bound():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst, cases = -math.inf, 0
    for i in range(50):
        eta = float(rng.uniform(0.2, 2.0))
        T = float(rng.uniform(1.0, 4.0))
        gen = random_generator(8, rng, eta=eta, t_range=(0.0, T))
        problem = make_problem(gen, np.ones(8), T, eta=eta)
        rep = check_decay(problem, 10, tol=1e-7, seed=i)
        worst = max(worst, float(np.max(rep.violations)))
        cases += rep.norms.size
    elapsed = time.perf_counter() - t0
    ok = worst <= 0 and cases == 500 and elapsed <= 60
    record(1, ok, f"{cases} pairs, max(norm - bound - 1e-7) = {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 0
    assert elapsed <= 60


def test_criterion_2_lchs_identity():
    rng = np.random.default_rng(7)
    beta, eps_a = 0.9, 1e-3
    cal = lchs.calibrate_k_constants(beta, eps_a)
    t0 = time.perf_counter()
    op_err, sum_err = 0.0, 0.0
    for _ in range(10):
        gen = random_generator(4, rng, eta=0.2, t_range=(0.0, 1.0))
        grid = lchs.plan_k_grid(beta, eps_a, 1.0, gen.alpha_L((0.0, 1.0)), cal.c_K, cal.c_Q)
        approx = lchs.lchs_operator(gen, grid, 0.0, 1.0, tol=1e-7)
        exact = propagate_reference(gen, 0.0, 1.0, 1e-11)
        op_err = max(op_err, opnorm(approx - exact))
        sum_err = max(sum_err, abs(complex(np.sum(grid.cs)) - 1.0))
    elapsed = time.perf_counter() - t0
    ok = op_err <= 1e-3 and sum_err <= 1e-3 and elapsed <= 120
    record(2, ok, f"operator error {op_err:.2e}, |sum c - 1| = {sum_err:.2e}, "
                  f"c_K={cal.c_K}, c_Q={cal.c_Q}, {elapsed:.1f}s")
    assert op_err <= 1e-3
    assert sum_err <= 1e-3
    assert elapsed <= 120


def test_criterion_3_time_marching_fidelity():
    rng = np.random.default_rng(11)
    details = []
    ok = True
    for i in range(4):
        T = 2.0
        gen = random_generator(4, rng, eta=0.3, scale=1.5, t_range=(0.0, T))
        assert gen.alpha_A * T <= 8
        problem = make_problem(gen, rng.normal(size=4) + 1j * rng.normal(size=4), T)
        state, _ = timemarching.tm_final_homogeneous(problem, 1e-3, seed=i)
        uT = solve_reference(problem, [T], 1e-12).states[-1]
        err = normalized_distance(state.vector, uT)
        bound = state.budget.extra["normalization_bound"]
        ok &= err <= 1e-3 and err <= bound
        details.append(f"{err:.1e}<={bound:.1e}")
    record(3, ok, "error <= bound: " + ", ".join(details))
    assert ok


def _ff_problems():
    scalar = make_problem(constant_generator(np.array([[-1.0]])), [1.0], 20.0,
                          b_vec=lambda ts: np.ones((np.atleast_1d(ts).size, 1)), eta=1.0,
                          label="scalar")
    rng = np.random.default_rng(5)
    A = _constant_dissipative(4, 1.0, rng)
    bv = rng.normal(size=4) + 1j * rng.normal(size=4)
    vec = make_problem(constant_generator(A), rng.normal(size=4), 20.0,
                       b_vec=lambda ts: np.tile(bv, (np.atleast_1d(ts).size, 1)), eta=1.0,
                       label="dim4")
    return [scalar, vec]


def test_criterion_4_fast_forwarding():
    t0 = time.perf_counter()
    ok = True
    details = []
    for p20 in _ff_problems():
        p200 = p20.with_T(200.0)
        plan20 = plan_T0_for_problem(p20, 1e-3, certified=True)
        plan200 = plan_T0_for_problem(p200, 1e-3, certified=True)
        trunc = truncated_solution_error(p20, plan20)
        s20, r20 = timemarching.tm_final_inhomogeneous(p20, 1e-3, fast_forward=True)
        s200, r200 = timemarching.tm_final_inhomogeneous(p200, 1e-3, fast_forward=True)
        emu_err = s20.meta["error_vs_reference"]
        # counters and T0 must match exactly; the formula estimate is evaluated from
        # norms measured at different absolute times, so it agrees to rounding only
        same = (plan20.T0 == plan200.T0 and r20.counters == r200.counters
                and r20.ham_t_queries == pytest.approx(r200.ham_t_queries, rel=1e-12))
        ok &= trunc <= 1e-3 and emu_err <= 1e-3 and same
        details.append(f"{p20.label}: T0={plan20.T0:.4g}/{plan200.T0:.4g}, "
                       f"trunc={trunc:.1e}, emulated={emu_err:.1e}, counters equal={same}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 120
    record(4, ok, "; ".join(details) + f"; {elapsed:.1f}s")
    assert ok


def _history_cases():
    rng = np.random.default_rng(3)
    T = 2.0
    gen = random_generator(3, rng, eta=0.5, t_range=(0.0, T))
    u0 = rng.normal(size=3) + 1j * rng.normal(size=3)
    homo = make_problem(gen, u0, T, eta=0.5, label="homo")
    bv = rng.normal(size=3)
    inhomo = make_problem(gen, u0, T, eta=0.5, label="inhomo",
                          b_vec=lambda ts: np.outer(1 + 0.5 * np.sin(np.atleast_1d(ts)), bv))
    return homo, inhomo


def test_criterion_5_history_fidelity():
    homo, inhomo = _history_cases()
    h = 0.125  # M = 16
    results = {}
    for p in (homo, inhomo):
        ref = timemarching.reference_history(p, h).reshape(-1)
        st, _ = timemarching.tm_history(p, 1e-3, h)
        results[f"tm-{p.label}"] = fidelity(st.vector, ref)
        st, _ = lchs.lchs_history(p, 1e-3, h)
        results[f"lchs-{p.label}"] = fidelity(st.vector, ref)
    # dissipative homogeneous: keep M0 = ceil((alpha_A/eta) log(1/eps)) rows
    T = 40.0
    A = _constant_dissipative(3, 0.5, np.random.default_rng(9))
    gen = constant_generator(A)
    p = make_problem(gen, np.ones(3), T, eta=0.5, label="ff")
    hff = 1.25  # M = 32
    st, _ = timemarching.tm_history(p, 1e-3, hff, fast_forward=True)
    M0 = math.ceil(gen.alpha_A / 0.5 * math.log(1e3))
    kept = st.budget.extra["rows_kept"]
    ref = timemarching.reference_history(p, hff).reshape(-1)
    results["tm-ff"] = fidelity(st.vector, ref)
    ok = all(f >= 1 - 1e-3 for f in results.values()) and kept == min(32, M0)
    record(5, ok, ", ".join(f"{k}: 1-F={1 - v:.1e}" for k, v in results.items())
           + f", M0={M0} rows kept={kept} of 32")
    assert ok


def test_criterion_6_resource_scaling():
    tm, lc = timemarching.tm_resource_estimate, lchs.lchs_resource_estimate
    norms = {"u0_norm": 1.0, "uT_norm": 1.0, "b_max": 1.0, "b_L1": 1.0, "Q_hist": 1.0}
    diss = ("final_inhomo", "history_homo", "history_inhomo")
    invariant = all(
        tm(s, 1.0, 10.0, 0.5, 1e-6, 2.0, norms).ham_t_queries
        == tm(s, 1.0, 1e4, 0.5, 1e-6, 2.0, norms).ham_t_queries
        and lc(s, 1.0, 10.0, 0.5, 0.9, 1e-6, norms).ham_t_queries
        == lc(s, 1.0, 1e4, 0.5, 0.9, 1e-6, norms).ham_t_queries
        for s in diss)
    tm_ratio = (tm("final_homo", 1.0, 20.0, None, 1e-6, 1.0).ham_t_queries
                / tm("final_homo", 1.0, 10.0, None, 1e-6, 1.0).ham_t_queries)
    lc_ratio = (lc("final_homo", 1.0, 20.0, None, 0.9, 1e-6).ham_t_queries
                / lc("final_homo", 1.0, 10.0, None, 0.9, 1e-6).ham_t_queries)

    def spread(scenario: str) -> float:
        r = np.array([tm(scenario, 1.0, 10.0, 1.0, e, 1.0, norms).ham_t_queries
                      / (math.log(1 / e) ** 3 / math.log(math.log(1 / e)))
                      for e in (1e-3, 1e-6, 1e-9)])
        c = 0.5 * (r.max() + r.min())  # minimax normalisation constant
        return float(np.max(np.abs(r / c - 1)))

    hist = max(spread("history_homo"), spread("history_inhomo"))
    final = spread("final_inhomo")
    ok = invariant and 3.5 <= tm_ratio <= 4.5 and 1.9 <= lc_ratio <= 2.2 and hist <= 0.10
    record(6, ok, f"(a) invariant={invariant} (b) tm x{tm_ratio:.3f} (c) lchs x{lc_ratio:.3f} "
                  f"(d) history-cell spread {hist:.1%} [final-state cell {final:.1%}, not asserted]")
    assert ok


def test_criterion_7_quadrature():
    rng = np.random.default_rng(1)
    worst = 0.0
    for n in range(1, 11):
        rule = gauss_legendre(n, -0.3, 1.7)
        for deg in range(2 * n):
            c = rng.normal(size=deg + 1)
            approx = float(rule.weights @ np.polyval(c, rule.nodes))
            P = np.polyint(c)
            exact = np.polyval(P, 1.7) - np.polyval(P, -0.3)
            worst = max(worst, abs(approx - exact) / max(1.0, abs(exact)))
    dominated = True
    for n in range(1, 7):
        rule = gauss_legendre(n, 0.0, 1.0)
        err = abs(float(rule.weights @ np.exp(rule.nodes)) - (math.e - 1.0))
        dominated &= err <= quadrature_error_bound(0.0, 1.0, n, math.e)
    ok = worst <= 1e-12 and dominated
    record(7, ok, f"exactness error {worst:.1e}, bound dominates e^x for n<=6: {dominated}")
    assert ok


def test_criterion_8_reaction_diffusion():
    spec_err = 0.0
    for N in (4, 8, 16, 64):
        k = np.arange(1, N)
        spec_err = max(spec_err, float(np.max(np.abs(
            np.sort(np.linalg.eigvalsh(laplacian_1d(N)))
            - np.sort(-4 * np.sin(k * np.pi / (2 * N)) ** 2)))))
    rng = np.random.default_rng(8)
    worst = -math.inf
    for _ in range(20):
        d, N = int(rng.integers(1, 3)), int(rng.integers(3, 9))
        a_star = float(rng.uniform(0.1, 2.0))
        a = [float(a_star + rng.uniform(0, 1)) for _ in range(d)]
        a[0] = a_star
        c = [float(rng.normal()) for _ in range(d)]
        spec = make_reaction_diffusion(d, N, a, c, a_star=a_star)
        L, _ = rd_operators(spec, float(rng.uniform(0, 5)))
        bound = -4 * N * N * math.sin(math.pi / (2 * N)) ** 2 * a_star
        worst = max(worst, float(np.linalg.eigvalsh(L)[-1]) - bound)
    eta512 = rd_eta_bound(512, 1.0).rigorous
    ok = spec_err <= 1e-10 and worst <= 1e-9 and 0.9999 * math.pi ** 2 <= eta512 <= math.pi ** 2
    record(8, ok, f"spectrum error {spec_err:.1e}, max(lambda_max - bound) {worst:.1e}, "
                  f"eta_rigorous(512,1)={eta512:.8f}")
    assert ok


def test_criterion_9_normalization_bound():
    rng = np.random.default_rng(99)
    violations = 0
    for d in (2, 8, 64):
        for i in range(1000):
            x = rng.normal(size=d) + 1j * rng.normal(size=d)
            scale = 10.0 ** rng.uniform(-6, 1)
            y = x + scale * (rng.normal(size=d) + 1j * rng.normal(size=d)) if i % 2 else \
                rng.normal(size=d) + 1j * rng.normal(size=d)
            if normalized_distance(x, y) > normalization_bound(x, y) * (1 + 1e-12):
                violations += 1
    record(9, violations == 0, f"{violations} violations in 3000 pairs")
    assert violations == 0


@pytest.mark.parametrize("_", [None])
def test_criterion_10_decay_curves(_, tmp_path):
    details, ok = [], True
    for name in ("decay-diag", "decay-random4"):
        cfg = preset_config(name)
        a = run(cfg, tmp_path / "a" / f"{name}.csv")
        b = run(cfg, tmp_path / "b" / f"{name}.csv")
        t = a.table
        bounded = all(n <= bd + 1e-9 for n, bd in zip(t.column("norm_phi_0_t") + t.column("norm_phi_t_T"),
                                                         t.column("bound_0_t") + t.column("bound_t_T")))
        same = a.csv_path.read_bytes() == b.csv_path.read_bytes()
        ok &= bounded and same
        details.append(f"{name}: {len(t.rows)} rows bounded={bounded} identical={same}")
    record(10, ok, "; ".join(details))
    assert ok
