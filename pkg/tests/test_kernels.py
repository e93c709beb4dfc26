"""The compiled kernels and the numpy fallback must agree."""

from __future__ import annotations

import numpy as np
import pytest

from ffode import _kernels_py, kernels

compiled = pytest.importorskip("ffode._kernels")


def _samples(n, d, rng):
    return rng.normal(size=(2 * n + 1, d, d)) * 0.3 + 1j * rng.normal(size=(2 * n + 1, d, d)) * 0.3


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_rk4_matrix_backends_agree(rng):
    n, d = 40, 3
    S = _samples(n, d, rng)
    hs = np.full(n, 0.01)
    a = kernels.rk4_matrix(S, hs, np.eye(d), impl=compiled)
    b = kernels.rk4_matrix(S, hs, np.eye(d), impl=_kernels_py)
    assert np.allclose(a, b, atol=1e-13)


def test_rk4_march_backends_agree(rng):
    n, d = 30, 2
    S = _samples(n, d, rng)
    Sb = rng.normal(size=(2 * n + 1, d)) + 0j
    hs = np.full(n, 0.02)
    add_at = np.array([0, 5, 5, 30])
    vecs = rng.normal(size=(4, d)) + 0j
    rec = np.array([0, 10, 30])
    kw = dict(Sb=Sb, add_at=add_at, add_vecs=vecs, rec_at=rec)
    ua, ra = kernels.rk4_march(S, hs, np.ones(d), impl=compiled, **kw)
    ub, rb = kernels.rk4_march(S, hs, np.ones(d), impl=_kernels_py, **kw)
    assert np.allclose(ua, ub, atol=1e-13)
    assert np.allclose(ra, rb, atol=1e-13)


def test_rk4_family_backends_agree(rng):
    n, d = 25, 3
    L = _samples(n, d, rng)
    L = 0.5 * (L + np.conj(np.swapaxes(L, 1, 2)))
    H = _samples(n, d, rng)
    H = 0.5 * (H + np.conj(np.swapaxes(H, 1, 2)))
    ks = np.array([-2.0, 0.0, 1.5])
    hs = np.full(n, 0.01)
    U0 = rng.normal(size=(3, d)) + 0j
    kw = dict(add_at=np.array([3, 12]), add_vecs=rng.normal(size=(2, d)) + 0j,
              rec_at=np.array([0, 25]))
    a = kernels.rk4_family(L, H, ks, hs, U0, impl=compiled, **kw)
    b = kernels.rk4_family(L, H, ks, hs, U0, impl=_kernels_py, **kw)
    for x, y in zip(a, b):
        assert np.allclose(x, y, atol=1e-13)


def test_family_row_is_unitary_without_impulses(rng):
    n, d = 200, 2
    ts = np.linspace(0, 1, 2 * n + 1)
    L = np.zeros((2 * n + 1, d, d), dtype=complex)
    H = np.broadcast_to(np.array([[0, 1], [1, 0]], dtype=complex), L.shape).copy()
    H *= np.cos(ts)[:, None, None]
    U, _ = kernels.rk4_family(L, H, np.array([0.0]), np.full(n, 1 / n), np.array([[1.0, 0.0]]))
    assert np.linalg.norm(U[0]) == pytest.approx(1.0, abs=1e-9)


def test_kernels_validate_shapes(rng):
    with pytest.raises(ValueError):
        kernels.rk4_matrix(_samples(3, 2, rng), np.full(4, 0.1), np.eye(2), impl=compiled)
