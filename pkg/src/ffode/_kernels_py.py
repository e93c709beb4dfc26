"""Pure-numpy fallback for the compiled RK4 kernels.

Same sample layout and calling convention as the compiled module: sample
``2*i`` starts step ``i``, ``2*i + 1`` is its midpoint and ``2*i + 2`` its end,
and the generator at each sample is ``c1*S1 + c2*S2``.
"""

from __future__ import annotations

import numpy as np


def _check(S1: np.ndarray, S2: np.ndarray, n: int) -> None:
    if S1.shape[0] != 2 * n + 1 or S2.shape[0] != 2 * n + 1:
        raise ValueError("need 2*len(hs)+1 generator samples")


def rk4_matrix(S1, S2, c1, c2, hs, Phi) -> None:
    """Advance ``Phi`` in place through ``len(hs)`` RK4 steps of dPhi/dt = A(t) Phi."""
    n = hs.shape[0]
    _check(S1, S2, n)
    d = Phi.shape[0]
    if S1.shape[1:] != (d, d) or Phi.shape[1] != d:
        raise ValueError("dimension mismatch")
    use2 = c2 != 0
    P = Phi.copy()
    A0 = c1 * S1[0] + (c2 * S2[0] if use2 else 0)
    for i in range(n):
        h = hs[i]
        A1 = c1 * S1[2 * i + 1] + (c2 * S2[2 * i + 1] if use2 else 0)
        A2 = c1 * S1[2 * i + 2] + (c2 * S2[2 * i + 2] if use2 else 0)
        K1 = A0 @ P
        K2 = A1 @ (P + 0.5 * h * K1)
        K3 = A1 @ (P + 0.5 * h * K2)
        K4 = A2 @ (P + h * K3)
        P = P + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        A0 = A2
    Phi[...] = P


def rk4_march(S1, S2, c1, c2, Sb, has_source, hs, u, add_at, add_vecs, rec_at, out) -> None:
    """March a vector through du/dt = A(t) u + b(t) with RK4 (see the compiled twin)."""
    n = hs.shape[0]
    _check(S1, S2, n)
    if has_source and Sb.shape[0] != 2 * n + 1:
        raise ValueError("need 2*len(hs)+1 source samples")
    n_add, n_rec = add_at.shape[0], rec_at.shape[0]
    if add_vecs.shape[0] != n_add or out.shape[0] != n_rec:
        raise ValueError("impulse/record arrays mismatch")
    use2 = c2 != 0
    U = u.copy()
    ia = ir = 0
    A0 = c1 * S1[0] + (c2 * S2[0] if use2 else 0)
    for i in range(n + 1):
        while ia < n_add and add_at[ia] == i:
            U += add_vecs[ia]
            ia += 1
        while ir < n_rec and rec_at[ir] == i:
            out[ir] = U
            ir += 1
        if i == n:
            break
        h = hs[i]
        A1 = c1 * S1[2 * i + 1] + (c2 * S2[2 * i + 1] if use2 else 0)
        A2 = c1 * S1[2 * i + 2] + (c2 * S2[2 * i + 2] if use2 else 0)
        if has_source:
            b0, b1, b2 = Sb[2 * i], Sb[2 * i + 1], Sb[2 * i + 2]
        else:
            b0 = b1 = b2 = 0.0
        K1 = A0 @ U + b0
        K2 = A1 @ (U + 0.5 * h * K1) + b1
        K3 = A1 @ (U + 0.5 * h * K2) + b1
        K4 = A2 @ (U + h * K3) + b2
        U = U + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        A0 = A2
    u[...] = U
    if ia != n_add or ir != n_rec:
        raise ValueError("impulse/record indices must be sorted and within the grid")


def rk4_family(L, H, ks, hs, U, add_at, add_vecs, rec_at, out) -> None:
    """March a batch of vectors, row ``b`` under i*(ks[b]*L + H), vectorised over the batch."""
    n = hs.shape[0]
    _check(L, H, n)
    nb, d = U.shape
    if ks.shape[0] != nb:
        raise ValueError("one k per batch row")
    n_add, n_rec = add_at.shape[0], rec_at.shape[0]
    if add_vecs.shape[0] != n_add or out.shape[0] != n_rec:
        raise ValueError("impulse/record arrays mismatch")
    if np.any(np.diff(add_at) < 0) or np.any(np.diff(rec_at) < 0):
        raise ValueError("impulse/record indices must be sorted")
    if (n_add and (add_at[0] < 0 or add_at[-1] > n)) or (n_rec and (rec_at[0] < 0 or rec_at[-1] > n)):
        raise ValueError("impulse/record indices must lie within the grid")
    ck = (1j * ks)[:, None]

    def rhs(s, X):
        # rows of X are vectors, so A x becomes X @ A^T
        return ck * (X @ L[s].T) + 1j * (X @ H[s].T)

    X = U.copy()
    ia = ir = 0
    for i in range(n + 1):
        while ia < n_add and add_at[ia] == i:
            X += add_vecs[ia][None, :]
            ia += 1
        while ir < n_rec and rec_at[ir] == i:
            out[ir] = X
            ir += 1
        if i == n:
            break
        h = hs[i]
        K1 = rhs(2 * i, X)
        K2 = rhs(2 * i + 1, X + 0.5 * h * K1)
        K3 = rhs(2 * i + 1, X + 0.5 * h * K2)
        K4 = rhs(2 * i + 2, X + h * K3)
        X = X + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
    U[...] = X
