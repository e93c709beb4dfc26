"""Gauss-Legendre rules, panelled integration and the (M_I, n) planner."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss


@dataclass(frozen=True)
class QuadRule:
    n: int
    nodes: np.ndarray
    weights: np.ndarray
    a: float
    b: float


@dataclass(frozen=True)
class PanelPlan:
    M_I: int
    n: int
    eps_int: float = float("nan")
    # Integrating an N-vector componentwise costs at most a sqrt(N) factor in
    # the error; planners ignore it because it only enters through a log.
    advisory: str = "vector sqrt(N) refinement not applied"


_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(n: int, a: float = -1.0, b: float = 1.0) -> QuadRule:
    """n-point Gauss-Legendre rule on (a, b), exact for degree <= 2n-1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not a < b:
        raise ValueError("need a < b")
    if n not in _CACHE:
        _CACHE[n] = leggauss(n)
    x, w = _CACHE[n]
    half = 0.5 * (b - a)
    return QuadRule(n=n, nodes=half * x + 0.5 * (a + b), weights=half * w, a=float(a), b=float(b))


def quadrature_error_bound(a: float, b: float, n: int, deriv_bound: float) -> float:
    """(b-a)^{2n+1} (n!)^4 / ((2n+1) ((2n)!)^3) * max|f^{(2n)}|, evaluated in log space."""
    if deriv_bound < 0:
        raise ValueError("deriv_bound must be non-negative")
    if deriv_bound == 0:
        return 0.0
    logv = ((2 * n + 1) * math.log(b - a) + 4 * math.lgamma(n + 1)
            - math.log(2 * n + 1) - 3 * math.lgamma(2 * n + 1) + math.log(deriv_bound))
    return math.exp(logv)


def plan_panels(T: float, alpha_A: float, eps: float, c_panels: float = 1.0,
                c_nodes: float = 1.0,
                deriv_bound: Callable[[float, int], float] | None = None) -> PanelPlan:
    """M_I = ceil(c_panels*alpha_A*T), n = ceil(c_nodes*log(max(e, alpha_A*T/eps))).

    ``deriv_bound(panel_width, n)`` is an optional hook returning a bound on
    the 2n-th derivative of the integrand; when given, ``eps_int`` is the
    per-panel bound times M_I.
    """
    if min(T, alpha_A, eps, c_panels, c_nodes) <= 0:
        raise ValueError("plan_panels needs positive inputs")
    M_I = max(1, math.ceil(c_panels * alpha_A * T))
    n = max(1, math.ceil(c_nodes * math.log(max(math.e, alpha_A * T / eps))))
    eps_int = float("nan")
    if deriv_bound is not None:
        w = T / M_I
        eps_int = M_I * quadrature_error_bound(0.0, w, n, deriv_bound(w, n))
    return PanelPlan(M_I=M_I, n=n, eps_int=eps_int)


def panel_nodes(plan: PanelPlan, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """All (node, weight) pairs of the panelled rule, flattened in time order."""
    edges = np.linspace(a, b, plan.M_I + 1)
    x, w = gauss_legendre(plan.n).nodes, gauss_legendre(plan.n).weights
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).reshape(-1)
    weights = (half[:, None] * w[None, :]).reshape(-1)
    return nodes, weights


def integrate_vector(f: Callable[[float], np.ndarray], plan: PanelPlan, a: float,
                     b: float) -> np.ndarray:
    """sum over panels and nodes of c_s f(t_s)."""
    if not a < b:
        raise ValueError("need a < b")
    nodes, weights = panel_nodes(plan, a, b)
    acc = None
    for t, c in zip(nodes, weights):
        v = c * np.asarray(f(float(t)))
        acc = v if acc is None else acc + v
    return acc
