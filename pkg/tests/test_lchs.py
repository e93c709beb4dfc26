from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffode import lchs
from ffode.emulation import fidelity
from ffode.errors import PreconditionError
from ffode.linalg import (
    constant_generator,
    make_problem,
    opnorm,
    propagate_reference,
    random_generator,
    solve_reference,
)


def _scalar(a=-1.0, u0=1.0, T=1.0, b=None, eta=None):
    b_vec = None if b is None else (lambda ts: np.full((np.atleast_1d(ts).size, 1), b))
    return make_problem(constant_generator(np.array([[a]])), [u0], T, b_vec=b_vec, eta=eta)


def test_kernel_value_at_zero():
    assert lchs.kernel_weight(0.0, 0.5) == pytest.approx(math.exp(math.sqrt(2) - 1) / (2 * math.pi),
                                                        rel=1e-12)


def test_kernel_decays_monotonically():
    ks = np.geomspace(10, 1e4, 400)
    w = np.abs(lchs.kernel_weight(ks, 0.5))
    assert np.all(np.diff(w) < 0)


def test_kernel_rejects_bad_beta():
    with pytest.raises(ValueError):
        lchs.kernel_weight(1.0, 1.0)


def test_k_grid_examples():
    g = lchs.plan_k_grid(0.5, math.exp(-4), 1.0, 1.0, c_K=1.0)
    assert g.K == pytest.approx(16.0)
    assert g.h1_planned == pytest.approx(1 / math.e)
    assert g.ks.size == g.panels * g.Q_nodes
    assert np.all(np.abs(g.ks) < g.K)


def test_weights_sum_to_one_on_calibrated_grid():
    cal = lchs.calibrate_k_constants(0.9, 1e-3)
    g = lchs.plan_k_grid(0.9, 1e-3, 1.0, 1.0, cal.c_K, cal.c_Q)
    assert abs(complex(g.cs.sum()) - 1) <= 1e-3
    assert lchs.scalar_identity_error(g, 1.0) <= 0.5e-3


def test_calibration_is_cached_by_decade():
    assert lchs.calibrate_k_constants(0.9, 3e-3) is lchs.calibrate_k_constants(0.9, 1e-3)


def test_tail_mass_decreases():
    assert lchs.tail_mass(40, 0.9) < lchs.tail_mass(5, 0.9)
    assert abs(lchs.tail_integral(40, 0.9)) <= lchs.tail_mass(40, 0.9)


@given(st.floats(-5, 5), st.integers(0, 1000))
@settings(max_examples=6, deadline=None)
def test_unitary_U_is_unitary(k, seed):
    gen = random_generator(3, np.random.default_rng(seed), eta=0.3)
    U = lchs.unitary_U(gen, k, 0.0, 1.0)
    assert opnorm(U.conj().T @ U - np.eye(3)) <= 1e-9


def test_unitary_budgeted_within_eps(rng):
    gen = random_generator(2, rng, eta=0.3)
    W, info = lchs.unitary_U(gen, 3.7, 0.0, 1.0, "budgeted", eps_0=1e-6, return_info=True)
    assert info["deviation"] <= 1e-6
    assert opnorm(W - lchs.unitary_U(gen, 3.7, 0.0, 1.0)) <= 1e-6


def test_lchs_operator_matches_propagator(rng):
    gen = random_generator(3, rng, eta=0.3, t_range=(0, 1))
    cal = lchs.calibrate_k_constants(0.9, 1e-3)
    g = lchs.plan_k_grid(0.9, 1e-3, 1.0, gen.alpha_L((0, 1)), cal.c_K, cal.c_Q)
    assert opnorm(lchs.lchs_operator(gen, g, 0.0, 1.0) - propagate_reference(gen, 0.0, 1.0)) <= 1e-3


def test_final_homogeneous_scalar():
    st_, rep = lchs.lchs_final_homogeneous(_scalar(), 1e-3)
    assert abs(st_.vector[0] - math.exp(-1)) <= 1e-3
    assert rep.counters["M_s"] == st_.meta["grid"].M_s


def test_final_homogeneous_two_level():
    A = np.diag([-1.0, -2.0]) + 1j * np.array([[0, 0.5], [0.5, 0]])
    p = make_problem(constant_generator(A), [1.0, 1.0], 1.0)
    st_, _ = lchs.lchs_final_homogeneous(p, 1e-3)
    assert fidelity(st_.vector, solve_reference(p, [1.0]).states[-1]) >= 1 - 1e-3


def test_final_homogeneous_requires_nonpositive_L():
    with pytest.raises(PreconditionError):
        lchs.lchs_final_homogeneous(_scalar(a=0.5), 1e-3)


def test_t_grid_example():
    p = _scalar(b=1.0, u0=0.0, T=1.0)
    tg = lchs.plan_t_grid(p, 1e-3, K=4.0)
    assert tg.h2_planned == pytest.approx(1 / (8 * math.e))


def test_t_grid_weights_track_source_integral():
    p = make_problem(constant_generator(np.array([[-1.0]])), [0.0], 3.0,
                     b_vec=lambda ts: np.exp(-np.atleast_1d(ts))[:, None])
    tg = lchs.plan_t_grid(p, 1e-6, K=2.0)
    assert tg.l1 == pytest.approx(1 - math.exp(-3), abs=1e-6)


def test_final_inhomogeneous_scalar():
    st_, _ = lchs.lchs_final_inhomogeneous(_scalar(u0=0.0, T=5.0, b=1.0), 1e-3)
    assert st_.meta["error_vs_reference"] <= 1e-3
    assert st_.vector[0].real == pytest.approx(1 - math.exp(-5), abs=1e-3)


def test_final_inhomogeneous_fast_forward_is_T_invariant():
    p = _scalar(u0=0.0, T=20.0, b=1.0, eta=1.0)
    a, ra = lchs.lchs_final_inhomogeneous(p, 1e-3, fast_forward=True)
    b, rb = lchs.lchs_final_inhomogeneous(p.with_T(200.0), 1e-3, fast_forward=True)
    for key in ("M_s", "M_s_prime", "Q2"):
        assert ra.counters[key] == rb.counters[key]
    assert ra.counters["K"] == pytest.approx(rb.counters["K"], rel=1e-12)
    assert ra.ham_t_queries == pytest.approx(rb.ham_t_queries, rel=1e-12)
    assert a.meta["error_vs_reference"] <= 1e-3


def test_history_homogeneous_scalar():
    st_, _ = lchs.lchs_history(_scalar(T=4.0), 1e-3, 0.5)
    assert fidelity(st_.vector, np.exp(-0.5 * np.arange(8))) >= 1 - 1e-3


def test_history_window_independent_of_M():
    p = _scalar(u0=0.0, T=5.0, b=1.0, eta=1.0)
    s_short, _ = lchs.lchs_history(p, 1e-3, 1.0, fast_forward=True)
    assert fidelity(s_short.vector, 1 - np.exp(-np.arange(5.0))) >= 1 - 1e-3
    s_long, _ = lchs.lchs_history(p.with_T(10.0), 1e-3, 1.0, fast_forward=True)
    assert s_long.meta["plan"].w == s_short.meta["plan"].w


def test_resource_estimate_example():
    rep = lchs.lchs_resource_estimate("final_inhomo", 1.0, 10.0, 1.0, 0.5, 1e-3,
                                      {"u0_norm": 1.0, "b_L1": 1.0, "uT_norm": 1.0})
    assert rep.ham_t_queries == pytest.approx(2 * math.log(1000) ** 4)
    assert rep.ham_t_queries == pytest.approx(4553.6, rel=1e-4)


def test_resource_estimate_semi_ratio():
    a = lchs.lchs_resource_estimate("final_homo", 1.0, 10.0, None, 0.9, 1e-3).ham_t_queries
    b = lchs.lchs_resource_estimate("final_homo", 1.0, 20.0, None, 0.9, 1e-3).ham_t_queries
    assert b / a == pytest.approx(2.0)
