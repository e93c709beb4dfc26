from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffode.dissipation import (
    check_decay,
    decay_bound,
    estimate_eta,
    normalization_bound,
    normalized_distance,
    plan_M0_history_homo,
    plan_T0_final,
    plan_T0_for_problem,
    plan_window_history_inhomo,
    truncated_solution_error,
)
from ffode.errors import DegenerateSolutionError, PreconditionError
from ffode.linalg import (
    constant_generator,
    function_generator,
    make_problem,
    random_generator,
    random_hermitian,
)


def test_estimate_eta_examples(rng):
    assert estimate_eta(constant_generator(-3 * np.eye(2))) == pytest.approx(3)
    H = random_hermitian(3, rng)
    assert estimate_eta(constant_generator(1j * H)) == pytest.approx(0, abs=1e-12)
    gen = function_generator(lambda t: np.diag([-1 - t, -2.0]), 2, t_range=(0, 1))
    assert estimate_eta(gen, 101) == pytest.approx(1.0)


def test_decay_bound():
    assert decay_bound(1.0, 0.0) == 1.0
    assert decay_bound(1.0, 2.0) == pytest.approx(0.1353352832, rel=1e-9)
    with pytest.raises(ValueError):
        decay_bound(1.0, -1.0)


def test_check_decay_random(rng):
    gen = random_generator(4, rng, eta=0.6, t_range=(0, 3))
    rep = check_decay(make_problem(gen, np.ones(4), 3.0, eta=0.6), 12)
    assert rep.ok and rep.max_violation == 0.0


def test_check_decay_with_estimated_eta(rng):
    L = -2 * np.eye(3) + 0.5 * random_hermitian(3, rng)
    gen = constant_generator(L + 1j * random_hermitian(3, rng))
    eta = estimate_eta(gen)
    assert check_decay(make_problem(gen, np.ones(3), 2.0), 10, eta=eta).ok


def test_check_decay_needs_eta(rng):
    with pytest.raises(PreconditionError):
        check_decay(make_problem(random_generator(2, rng), [1, 0], 1.0))


vec = st.integers(0, 2**31 - 1)


@given(vec, st.sampled_from([2, 8, 64]), st.floats(1e-8, 10))
@settings(max_examples=80)
def test_normalization_inequality(seed, d, scale):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=d) + 1j * rng.normal(size=d)
    y = x + scale * (rng.normal(size=d) + 1j * rng.normal(size=d))
    assert normalized_distance(x, y) <= normalization_bound(x, y) * (1 + 1e-12)


def test_normalization_bound_degenerate():
    with pytest.raises(DegenerateSolutionError):
        normalization_bound(np.zeros(2), np.ones(2))


def test_plan_T0_example():
    plan = plan_T0_final(1.0, 1e-3, 1.0, 0.5, 0.0, 100.0)
    assert plan.T0 == pytest.approx(math.log(2000), rel=1e-12)
    assert not plan.full_horizon


def test_plan_T0_short_horizon_keeps_everything():
    plan = plan_T0_final(1.0, 1e-3, 1.0, 1.0, 1.0, 2.0)
    assert plan.full_horizon and plan.T0 == 2.0


def test_plan_M0_examples():
    p = plan_M0_history_homo(1.0, 1.0, math.exp(-5), 1.0)
    assert (p.M0, p.T0) == (5, 5.0)
    p = plan_M0_history_homo(2.0, 0.5, 1e-2, 0.5)
    assert (p.M0, p.T0) == (19, 9.5)


def test_plan_window_examples():
    assert plan_window_history_inhomo(1.0, 1.0, math.exp(-3), 0.0, 1.0).r == 3
    p = plan_window_history_inhomo(2.0, 1.0, 0.01, 1.0, 1.0)
    assert p.r == 12 and p.w == 12


def test_scalar_truncation_meets_eps():
    p = make_problem(constant_generator(np.array([[-1.0]])), [0.0], 20.0,
                     b_vec=lambda ts: np.ones((np.atleast_1d(ts).size, 1)), eta=1.0)
    plan = plan_T0_for_problem(p, 1e-3)
    assert plan.T0 < 20
    assert truncated_solution_error(p, plan) <= 1e-3


def test_certified_plan_for_vector_problem(rng):
    A = -np.eye(3) + 1j * random_hermitian(3, rng)
    bv = rng.normal(size=3)
    p = make_problem(constant_generator(A), rng.normal(size=3), 30.0,
                     b_vec=lambda ts: np.tile(bv, (np.atleast_1d(ts).size, 1)), eta=1.0)
    plan = plan_T0_for_problem(p, 1e-4, certified=True)
    assert truncated_solution_error(p, plan) <= 1e-4
    assert plan.T0 == plan_T0_for_problem(p.with_T(300.0), 1e-4, certified=True).T0
