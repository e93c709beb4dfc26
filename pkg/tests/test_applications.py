from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffode.applications import (
    NonHermitianSpec,
    as_coefficient,
    build_non_hermitian,
    build_reaction_diffusion,
    coefficient_preset,
    constant_non_hermitian,
    difference_1d,
    embed,
    laplacian_1d,
    laplacian_eigenvalues,
    make_reaction_diffusion,
    random_non_hermitian,
    rd_eta_bound,
    rd_operators,
)
from ffode.dissipation import check_decay
from ffode.errors import ConfigError, PreconditionError
from ffode.linalg import solve_reference


def test_coefficient_presets():
    ts = np.array([0.0, 1.0])
    assert np.allclose(coefficient_preset("constant", value=2.0)(ts), 2.0)
    assert np.allclose(coefficient_preset("linear-ramp", start=1.0, slope=0.5)(ts), [1.0, 1.5])
    s = coefficient_preset("sinusoidal", mean=1.0, amplitude=0.5, omega=math.pi)
    assert np.allclose(s(np.array([0.5])), 1.5)
    with pytest.raises((ConfigError, ValueError)):
        coefficient_preset("cubic")


def test_as_coefficient_forms():
    ts = np.linspace(0, 1, 3)
    assert np.allclose(as_coefficient(3)(ts), 3)
    assert np.allclose(as_coefficient(lambda t: 2 * t)(ts), 2 * ts)
    assert np.allclose(as_coefficient({"preset": "constant", "value": 1.5})(ts), 1.5)


@pytest.mark.parametrize("N", [4, 8, 16, 64])
def test_laplacian_spectrum(N):
    ev = np.sort(np.linalg.eigvalsh(laplacian_1d(N)))
    assert np.allclose(ev, np.sort(laplacian_eigenvalues(N)), atol=1e-10)


def test_laplacian_n4_values():
    assert np.allclose(np.sort(laplacian_eigenvalues(4)), [-3.414214, -2.0, -0.585786], atol=1e-6)
    spec = make_reaction_diffusion(1, 4, 1.0)
    L, H = rd_operators(spec, 0.0)
    assert np.linalg.eigvalsh(L)[-1] == pytest.approx(-9.37258, abs=1e-5)
    assert np.allclose(H, 0)


def test_difference_is_antisymmetric():
    G = difference_1d(6)
    assert np.allclose(G, -G.T)


def test_embed_kron_order():
    op = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose(embed(op, 0, 2), np.kron(op, np.eye(2)))
    assert np.allclose(embed(op, 1, 2), np.kron(np.eye(2), op))


def test_eta_bound_values():
    assert rd_eta_bound(2, 1.0).rigorous == pytest.approx(8.0)
    b = rd_eta_bound(512, 1.0)
    assert 0.9999 * math.pi ** 2 <= b.rigorous <= math.pi ** 2
    assert b.asymptotic == pytest.approx(math.pi ** 2)
    assert b.dissipative


@given(st.integers(3, 10), st.floats(0.05, 3.0), st.floats(-2, 2), st.integers(1, 2))
@settings(max_examples=25, deadline=None)
def test_lambda_max_below_rigorous_bound(N, a_star, c, d):
    spec = make_reaction_diffusion(d, N, [a_star] + [a_star + 0.3] * (d - 1), c, a_star=a_star)
    L, H = rd_operators(spec, 0.7)
    assert np.linalg.eigvalsh(L)[-1] <= -rd_eta_bound(N, a_star).rigorous + 1e-9
    assert np.allclose(H, H.conj().T)


def test_lowest_mode_decays_exponentially():
    N = 6
    spec = make_reaction_diffusion(1, N, 1.0)
    L, _ = rd_operators(spec, 0.0)
    w, V = np.linalg.eigh(L)
    p = build_reaction_diffusion(spec, 1.0, V[:, -1])
    uT = solve_reference(p, [1.0]).states[-1]
    assert np.linalg.norm(uT) == pytest.approx(math.exp(w[-1]), rel=1e-8)


def test_time_dependent_rd_problem_decays():
    spec = make_reaction_diffusion(1, 5, {"preset": "sinusoidal", "mean": 1.0, "amplitude": 0.5},
                                   {"preset": "constant", "value": 0.7}, a_star=0.5)
    p = build_reaction_diffusion(spec, 1.0)
    assert p.eta == pytest.approx(rd_eta_bound(5, 0.5).rigorous)
    assert check_decay(p, 6).ok


def test_rd_guards():
    with pytest.raises(PreconditionError):
        build_reaction_diffusion(make_reaction_diffusion(1, 4, 1.0, a_star=2.0), 1.0)
    with pytest.raises(ConfigError):
        build_reaction_diffusion(make_reaction_diffusion(3, 12, 1.0), 1.0)


def test_sigma_z_non_hermitian():
    sz = np.diag([1.0, -1.0])
    p = build_non_hermitian(constant_non_hermitian(-np.eye(2), sz), [1.0, 1.0], 1.0)
    uT = solve_reference(p, [1.0]).states[-1]
    assert np.allclose(uT, [math.exp(-1) * np.exp(-1j), math.exp(-1) * np.exp(1j)], atol=1e-10)


def test_non_hermitian_eta_is_doubled():
    spec = constant_non_hermitian(-np.eye(2), np.eye(2), eta=0.5)
    p = build_non_hermitian(spec, [1.0, 0.0], 2.0)
    assert p.eta == pytest.approx(1.0)
    assert p.meta["eta_spec"] == pytest.approx(0.5)


def test_random_non_hermitian_decays(rng):
    spec = random_non_hermitian(3, rng, eta=0.4)
    p = build_non_hermitian(spec, np.ones(3), 2.0)
    assert check_decay(p, 8).ok


def test_non_hermitian_check_rejects_non_hermitian_input():
    bad = NonHermitianSpec(lambda t: np.array([[0.0, 1.0], [0.0, 0.0]]), lambda t: np.eye(2), 0.1)
    with pytest.raises((PreconditionError, ConfigError)):
        bad.check(1.0)
