from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from ffode import linalg
from ffode.errors import PreconditionError
from ffode.linalg import (
    cartesian_split,
    constant_generator,
    expm_dense,
    function_generator,
    make_problem,
    opnorm,
    propagate_reference,
    random_generator,
    solve_reference,
    spectral_abscissa,
)

seeds = st.integers(min_value=0, max_value=2**31 - 1)


def _rand(d, rng):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


def _taylor_expm(M, order=30):
    s = max(0, math.ceil(math.log2(max(opnorm(M), 1.0))) + 1)
    X = M / 2 ** s
    out = np.eye(M.shape[0], dtype=complex)
    term = np.eye(M.shape[0], dtype=complex)
    for k in range(1, order + 1):
        term = term @ X / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def test_expm_trivial_cases():
    assert np.allclose(expm_dense(np.zeros((3, 3))), np.eye(3))
    assert np.allclose(expm_dense(np.diag([1.0, -1.0])), np.diag([math.e, 1 / math.e]), atol=1e-14)


def test_expm_matches_taylor_oracle(rng):
    M = _rand(6, rng)
    assert opnorm(expm_dense(M) - _taylor_expm(M)) <= 1e-10 * math.exp(opnorm(M))


def test_spectral_abscissa_examples():
    assert spectral_abscissa(-2 * np.eye(3)) == pytest.approx(-2)
    H = _rand(4, np.random.default_rng(0))
    H = H + H.conj().T
    assert spectral_abscissa(1j * H) == pytest.approx(0, abs=1e-12)
    assert spectral_abscissa(np.array([[-1.0, 4.0], [0.0, -1.0]])) == pytest.approx(1.0, abs=1e-12)


@given(seeds, st.integers(1, 6))
@settings(max_examples=30, deadline=None)
def test_cartesian_split_reassembles(seed, d):
    A = _rand(d, np.random.default_rng(seed))
    L, H = cartesian_split(A)
    assert np.allclose(L, L.conj().T)
    assert np.allclose(H, H.conj().T)
    assert np.allclose(L + 1j * H, A)


def test_propagate_trivial_generators():
    zero = constant_generator(np.zeros((2, 2)))
    assert np.allclose(propagate_reference(zero, 0.3, 1.7), np.eye(2))
    diag = constant_generator(np.diag([-1.0, -2.0]))
    assert np.allclose(propagate_reference(diag, 0.0, 1.0), np.diag([math.exp(-1), math.exp(-2)]),
                       atol=1e-12)
    ramp = function_generator(lambda t: -(1 + t) * np.eye(2), 2, t_range=(0, 1))
    assert opnorm(propagate_reference(ramp, 0.0, 1.0) - math.exp(-1.5) * np.eye(2)) <= 1e-10


@given(seeds)
@settings(max_examples=8, deadline=None)
def test_propagator_composes(seed):
    rng = np.random.default_rng(seed)
    gen = random_generator(3, rng, eta=0.3)
    a, b, c = np.sort(rng.uniform(0, 1, 3))
    P = propagate_reference(gen, b, c) @ propagate_reference(gen, a, b)
    assert opnorm(P - propagate_reference(gen, a, c)) <= 1e-8


def test_constant_propagator_matches_scipy(rng):
    A = _rand(4, rng)
    assert opnorm(propagate_reference(constant_generator(A), 0.0, 0.7)
                  - scipy.linalg.expm(0.7 * A)) <= 1e-10


def test_solve_reference_trivial():
    p = make_problem(constant_generator(np.zeros((2, 2))), [0, 0], 2.0, b=lambda t: np.array([1.0, 0]))
    assert np.allclose(solve_reference(p, [2.0]).states[-1], [2.0, 0.0], atol=1e-10)
    p = make_problem(constant_generator(np.array([[-1.0]])), [0.0], 20.0, b=lambda t: np.ones(1))
    assert abs(solve_reference(p, [20.0]).states[-1][0] - 1) <= 1e-8


def _fixed_rk4(problem, T, n):
    h = T / n
    u = problem.u0.copy()
    f = lambda t, v: problem.gen.eval(t) @ v + problem.b_eval(t)  # noqa: E731
    for i in range(n):
        t = i * h
        k1 = f(t, u)
        k2 = f(t + h / 2, u + h / 2 * k1)
        k3 = f(t + h / 2, u + h / 2 * k2)
        k4 = f(t + h, u + h * k3)
        u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return u


def test_solve_reference_against_fine_fixed_step(rng):
    gen = random_generator(4, rng, eta=0.4, t_range=(0, 1.5))
    bv = rng.normal(size=4)
    p = make_problem(gen, rng.normal(size=4), 1.5, b=lambda t: np.cos(3 * t) * bv)
    ref = solve_reference(p, [1.5], 1e-10).states[-1]
    assert np.linalg.norm(ref - _fixed_rk4(p, 1.5, 4000)) <= 1e-6


def test_trajectory_starts_at_u0(rng):
    p = make_problem(random_generator(2, rng), [1.0, 2.0], 1.0)
    tr = solve_reference(p, [0.0, 0.5, 1.0])
    assert np.allclose(tr.states[0], [1.0, 2.0])
    assert tr.times[0] == 0.0


def test_blocked_sampling_is_exact(monkeypatch, rng):
    gen = random_generator(3, rng, eta=0.3)
    full = propagate_reference(gen, 0.0, 1.0)
    monkeypatch.setattr(linalg, "SAMPLE_BUDGET", 2 * 9 * 50)
    assert np.array_equal(propagate_reference(gen, 0.0, 1.0), full)


def test_make_problem_rejects_wrong_eta():
    gen = constant_generator(np.diag([-1.0, -0.1]))
    with pytest.raises(PreconditionError):
        make_problem(gen, [1, 1], 1.0, eta=0.5)
    assert make_problem(gen, [1, 1], 1.0, eta=0.1).eta == 0.1


def test_padded_generator_is_zero_after_cut(rng):
    gen = random_generator(2, rng).padded(0.5)
    assert np.allclose(gen.samples(np.array([0.6, 0.9])), 0)
    assert np.allclose(propagate_reference(gen, 0.5, 2.0), np.eye(2))


@pytest.mark.parametrize("kind", ["dissipative", "semi", "unitary", "general"])
def test_random_generator_kinds(kind):
    gen = random_generator(4, np.random.default_rng(3), kind=kind, eta=0.7)
    Ls, _ = gen.split_samples(np.linspace(0, 1, 64))
    top = np.linalg.eigvalsh(Ls)[:, -1].max()
    if kind == "dissipative":
        assert top == pytest.approx(-0.7, abs=1e-9)
    elif kind == "semi":
        assert top <= 1e-9
    elif kind == "unitary":
        assert np.allclose(Ls, 0)
