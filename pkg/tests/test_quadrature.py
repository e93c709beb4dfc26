from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffode.quadrature import (
    gauss_legendre,
    integrate_vector,
    panel_nodes,
    plan_panels,
    quadrature_error_bound,
)


def test_two_point_rule():
    r = gauss_legendre(2)
    assert np.allclose(r.nodes, [-1 / math.sqrt(3), 1 / math.sqrt(3)], atol=1e-15)
    assert np.allclose(r.weights, [1.0, 1.0], atol=1e-15)


@given(st.integers(1, 40))
def test_nodes_match_numpy(n):
    x, w = np.polynomial.legendre.leggauss(n)
    r = gauss_legendre(n)
    assert np.allclose(r.nodes, x, atol=1e-13)
    assert np.allclose(r.weights, w, atol=1e-13)


@given(st.integers(1, 12), st.floats(-3, 3), st.floats(0.1, 4))
@settings(max_examples=60)
def test_exact_for_degree_2n_minus_1(n, a, width):
    b = a + width
    r = gauss_legendre(n, a, b)
    for deg in (0, n, 2 * n - 1):
        approx = float(r.weights @ r.nodes ** deg)
        exact = (b ** (deg + 1) - a ** (deg + 1)) / (deg + 1)
        assert approx == pytest.approx(exact, rel=1e-12, abs=1e-12)


def test_error_bound_examples():
    assert quadrature_error_bound(0, 1, 2, math.e) == pytest.approx(16 * math.e / 69120, rel=1e-12)
    assert quadrature_error_bound(0, 2, 1, 1.0) == pytest.approx(1 / 3, rel=1e-12)
    assert quadrature_error_bound(0, 1, 3, 0.0) == 0.0


@pytest.mark.parametrize("n", range(1, 7))  # beyond n=6 the true error is below rounding
def test_error_bound_dominates_exp(n):
    r = gauss_legendre(n, 0.0, 1.0)
    err = abs(float(r.weights @ np.exp(r.nodes)) - (math.e - 1))
    assert err <= quadrature_error_bound(0.0, 1.0, n, math.e)


def test_planner_examples():
    p = plan_panels(1.0, 1.0, 1e-3)
    assert (p.M_I, p.n) == (1, 7)
    p = plan_panels(10.0, 2.0, 1e-3)
    assert (p.M_I, p.n) == (20, 10)


def test_planner_derivative_hook():
    p = plan_panels(2.0, 1.0, 1e-6, deriv_bound=lambda w, n: 1.0)
    assert p.eps_int == pytest.approx(p.M_I * quadrature_error_bound(0, 2.0 / p.M_I, p.n, 1.0))


def test_integrate_vector_exp_decay():
    plan = plan_panels(5.0, 1.0, 1e-8)
    val = integrate_vector(lambda t: np.array([math.exp(-t)]), plan, 0.0, 5.0)
    assert val[0] == pytest.approx(1 - math.exp(-5), abs=1e-10)


def test_panel_nodes_are_ordered():
    nodes, weights = panel_nodes(plan_panels(3.0, 1.0, 1e-3), 0.0, 3.0)
    assert np.all(np.diff(nodes) > 0)
    assert weights.sum() == pytest.approx(3.0)


def test_bad_inputs():
    with pytest.raises(ValueError):
        gauss_legendre(0)
    with pytest.raises(ValueError):
        gauss_legendre(3, 1.0, 1.0)
    with pytest.raises(ValueError):
        plan_panels(1.0, 0.0, 1e-3)
