"""Kernel selection.

The compiled extension is used when it imports cleanly; setting
``FFODE_PURE_PYTHON=1`` forces the numpy fallback. ``BACKEND`` names the choice.
Wrappers normalise dtypes and contiguity so callers can pass plain arrays.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_impl = _kernels_py
BACKEND = "python"
if os.environ.get("FFODE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]

        _impl = _compiled
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        pass

_EMPTY_M = np.zeros((0, 0, 0), dtype=np.complex128)
_EMPTY_V = np.zeros((0, 0), dtype=np.complex128)


def _c3(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.complex128)


def rk4_matrix(S1, hs, Phi, *, S2=None, c1: complex = 1.0, c2: complex = 0.0,
               impl=None) -> np.ndarray:
    """RK4-propagate ``Phi`` (returned as a new array) across steps ``hs``."""
    impl = impl or _impl
    S1 = _c3(S1)
    S2 = S1 if S2 is None else _c3(S2)
    hs = np.ascontiguousarray(hs, dtype=np.float64)
    P = np.array(Phi, dtype=np.complex128, order="C", copy=True)
    impl.rk4_matrix(S1, S2, complex(c1), complex(c2), hs, P)
    return P


def rk4_march(S1, hs, u0, *, S2=None, c1: complex = 1.0, c2: complex = 0.0,
              Sb=None, add_at=None, add_vecs=None, rec_at=None, impl=None):
    """RK4-march a vector; returns ``(u_final, recorded_rows)``."""
    impl = impl or _impl
    S1 = _c3(S1)
    S2 = S1 if S2 is None else _c3(S2)
    hs = np.ascontiguousarray(hs, dtype=np.float64)
    u = np.array(u0, dtype=np.complex128, copy=True)
    d = u.shape[0]
    has_source = Sb is not None
    Sb = _c3(Sb) if has_source else _EMPTY_V
    add_at = np.ascontiguousarray(
        np.zeros(0) if add_at is None else add_at, dtype=np.int_)
    add_vecs = _c3(np.zeros((0, d)) if add_vecs is None else add_vecs).reshape(-1, d)
    rec_at = np.ascontiguousarray(
        np.zeros(0) if rec_at is None else rec_at, dtype=np.int_)
    out = np.zeros((rec_at.shape[0], d), dtype=np.complex128)
    impl.rk4_march(S1, S2, complex(c1), complex(c2), Sb, has_source, hs, u,
                   add_at, add_vecs, rec_at, out)
    return u, out


def rk4_family(L, H, ks, hs, U0, *, add_at=None, add_vecs=None, rec_at=None, impl=None):
    """March a batch of vectors, row ``b`` under i*(ks[b]*L + H).

    ``U0`` has one row per k. Returns ``(U_final, recorded)`` where
    ``recorded[r, b]`` is row ``b`` at record node ``rec_at[r]``.
    """
    impl = impl or _impl
    L, H = _c3(L), _c3(H)
    ks = np.ascontiguousarray(ks, dtype=np.float64)
    hs = np.ascontiguousarray(hs, dtype=np.float64)
    U = np.array(U0, dtype=np.complex128, order="C", copy=True)
    nb, d = U.shape
    add_at = np.ascontiguousarray(
        np.zeros(0) if add_at is None else add_at, dtype=np.int_)
    add_vecs = _c3(np.zeros((0, d)) if add_vecs is None else add_vecs).reshape(-1, d)
    rec_at = np.ascontiguousarray(
        np.zeros(0) if rec_at is None else rec_at, dtype=np.int_)
    out = np.zeros((rec_at.shape[0], nb, d), dtype=np.complex128)
    impl.rk4_family(L, H, ks, hs, U, add_at, add_vecs, rec_at, out)
    return U, out
