# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 kernels.

Every kernel consumes pre-sampled generator values on a (possibly non-uniform)
step grid: sample ``2*i`` is the start of step ``i``, ``2*i + 1`` its midpoint
and ``2*i + 2`` its end. The generator at a sample is ``c1*S1 + c2*S2`` so the
LCHS family ``i*(k*L + H)`` reuses one pair of sample arrays for every ``k``.

Arrays are C-contiguous; BLAS is column-major, so products are issued on the
transposes.
"""

import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport zgemm, zgemv

cnp.import_array()


cdef inline void _combine(double complex* dst, const double complex* a,
                          const double complex* b, double complex ca,
                          double complex cb, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i
    if cb == 0:
        for i in range(m):
            dst[i] = ca * a[i]
    else:
        for i in range(m):
            dst[i] = ca * a[i] + cb * b[i]


cdef inline void _matmul(double complex* C, double complex* A, double complex* B,
                         int d) noexcept nogil:
    # C = A @ B for row-major A, B, C
    cdef double complex one = 1.0
    cdef double complex zero = 0.0
    cdef char n = b'N'
    zgemm(&n, &n, &d, &d, &d, &one, B, &d, A, &d, &zero, C, &d)


cdef inline void _matvec(double complex* y, double complex* A, double complex* x,
                         int d) noexcept nogil:
    # y = A @ x for row-major A
    cdef double complex one = 1.0
    cdef double complex zero = 0.0
    cdef char t = b'T'
    cdef int inc = 1
    zgemv(&t, &d, &d, &one, A, &d, x, &inc, &zero, y, &inc)


def rk4_matrix(const double complex[:, :, ::1] S1,
               const double complex[:, :, ::1] S2,
               double complex c1, double complex c2,
               const double[::1] hs,
               double complex[:, ::1] Phi):
    """Advance ``Phi`` in place through ``len(hs)`` RK4 steps of dPhi/dt = A(t) Phi."""
    cdef Py_ssize_t n = hs.shape[0]
    cdef int d = Phi.shape[0]
    cdef Py_ssize_t m = d * d
    if S1.shape[0] != 2 * n + 1 or S2.shape[0] != 2 * n + 1:
        raise ValueError("need 2*len(hs)+1 generator samples")
    if S1.shape[1] != d or S1.shape[2] != d or Phi.shape[1] != d:
        raise ValueError("dimension mismatch")

    cdef double complex[::1] work = np.empty(8 * m, dtype=np.complex128)
    cdef double complex* A0 = &work[0]
    cdef double complex* A1 = &work[m]
    cdef double complex* A2 = &work[2 * m]
    cdef double complex* Y = &work[3 * m]
    cdef double complex* K1 = &work[4 * m]
    cdef double complex* K2 = &work[5 * m]
    cdef double complex* K3 = &work[6 * m]
    cdef double complex* K4 = &work[7 * m]
    cdef double complex* P = &Phi[0, 0]
    cdef Py_ssize_t i, j
    cdef double h

    with nogil:
        _combine(A0, &S1[0, 0, 0], &S2[0, 0, 0], c1, c2, m)
        for i in range(n):
            h = hs[i]
            _combine(A1, &S1[2 * i + 1, 0, 0], &S2[2 * i + 1, 0, 0], c1, c2, m)
            _combine(A2, &S1[2 * i + 2, 0, 0], &S2[2 * i + 2, 0, 0], c1, c2, m)
            _matmul(K1, A0, P, d)
            for j in range(m):
                Y[j] = P[j] + 0.5 * h * K1[j]
            _matmul(K2, A1, Y, d)
            for j in range(m):
                Y[j] = P[j] + 0.5 * h * K2[j]
            _matmul(K3, A1, Y, d)
            for j in range(m):
                Y[j] = P[j] + h * K3[j]
            _matmul(K4, A2, Y, d)
            for j in range(m):
                P[j] = P[j] + (h / 6.0) * (K1[j] + 2.0 * K2[j] + 2.0 * K3[j] + K4[j])
            # end sample of this step is the start sample of the next
            for j in range(m):
                A0[j] = A2[j]


def rk4_march(const double complex[:, :, ::1] S1,
              const double complex[:, :, ::1] S2,
              double complex c1, double complex c2,
              const double complex[:, ::1] Sb,
              bint has_source,
              const double[::1] hs,
              double complex[::1] u,
              const long[::1] add_at,
              const double complex[:, ::1] add_vecs,
              const long[::1] rec_at,
              double complex[:, ::1] out):
    """March a vector through du/dt = A(t) u + b(t) with RK4.

    ``add_at`` (sorted node indices) lists impulses ``add_vecs`` added to the
    state at those grid nodes; ``rec_at`` (sorted node indices) lists nodes
    whose state, after impulses, is written to the rows of ``out``.
    """
    cdef Py_ssize_t n = hs.shape[0]
    cdef int d = u.shape[0]
    cdef Py_ssize_t m = d * d
    cdef Py_ssize_t n_add = add_at.shape[0]
    cdef Py_ssize_t n_rec = rec_at.shape[0]
    if S1.shape[0] != 2 * n + 1 or S2.shape[0] != 2 * n + 1:
        raise ValueError("need 2*len(hs)+1 generator samples")
    if has_source and Sb.shape[0] != 2 * n + 1:
        raise ValueError("need 2*len(hs)+1 source samples")
    if add_vecs.shape[0] != n_add or out.shape[0] != n_rec:
        raise ValueError("impulse/record arrays mismatch")

    cdef double complex[::1] work = np.empty(3 * m + 5 * d, dtype=np.complex128)
    cdef double complex* A0 = &work[0]
    cdef double complex* A1 = &work[m]
    cdef double complex* A2 = &work[2 * m]
    cdef double complex* Y = &work[3 * m]
    cdef double complex* K1 = &work[3 * m + d]
    cdef double complex* K2 = &work[3 * m + 2 * d]
    cdef double complex* K3 = &work[3 * m + 3 * d]
    cdef double complex* K4 = &work[3 * m + 4 * d]
    cdef double complex* U = &u[0]
    cdef Py_ssize_t i, j, ia = 0, ir = 0
    cdef double h

    with nogil:
        _combine(A0, &S1[0, 0, 0], &S2[0, 0, 0], c1, c2, m)
        for i in range(n + 1):
            while ia < n_add and add_at[ia] == i:
                for j in range(d):
                    U[j] = U[j] + add_vecs[ia, j]
                ia += 1
            while ir < n_rec and rec_at[ir] == i:
                for j in range(d):
                    out[ir, j] = U[j]
                ir += 1
            if i == n:
                break
            h = hs[i]
            _combine(A1, &S1[2 * i + 1, 0, 0], &S2[2 * i + 1, 0, 0], c1, c2, m)
            _combine(A2, &S1[2 * i + 2, 0, 0], &S2[2 * i + 2, 0, 0], c1, c2, m)
            _matvec(K1, A0, U, d)
            if has_source:
                for j in range(d):
                    K1[j] = K1[j] + Sb[2 * i, j]
            for j in range(d):
                Y[j] = U[j] + 0.5 * h * K1[j]
            _matvec(K2, A1, Y, d)
            if has_source:
                for j in range(d):
                    K2[j] = K2[j] + Sb[2 * i + 1, j]
            for j in range(d):
                Y[j] = U[j] + 0.5 * h * K2[j]
            _matvec(K3, A1, Y, d)
            if has_source:
                for j in range(d):
                    K3[j] = K3[j] + Sb[2 * i + 1, j]
            for j in range(d):
                Y[j] = U[j] + h * K3[j]
            _matvec(K4, A2, Y, d)
            if has_source:
                for j in range(d):
                    K4[j] = K4[j] + Sb[2 * i + 2, j]
            for j in range(d):
                U[j] = U[j] + (h / 6.0) * (K1[j] + 2.0 * K2[j] + 2.0 * K3[j] + K4[j])
            for j in range(m):
                A0[j] = A2[j]
        if ia != n_add or ir != n_rec:
            with gil:
                raise ValueError("impulse/record indices must be sorted and within the grid")


cdef inline void _family_rhs(double* y, const double* L, const double* H,
                             double kr, const double* x, Py_ssize_t d) noexcept nogil:
    # y = (i*k*L + i*H) x on interleaved (re, im) storage, k real; d is small
    cdef Py_ssize_t r, c, a
    cdef double lr, li, hr, hi, xr, xi, ar, ai, br, bi
    for r in range(d):
        ar = 0.0
        ai = 0.0
        br = 0.0
        bi = 0.0
        for c in range(d):
            a = 2 * (r * d + c)
            lr = L[a]
            li = L[a + 1]
            hr = H[a]
            hi = H[a + 1]
            xr = x[2 * c]
            xi = x[2 * c + 1]
            ar = ar + lr * xr - li * xi
            ai = ai + lr * xi + li * xr
            br = br + hr * xr - hi * xi
            bi = bi + hr * xi + hi * xr
        # i*k*(ar + i ai) + i*(br + i bi)
        y[2 * r] = -kr * ai - bi
        y[2 * r + 1] = kr * ar + br


def rk4_family(const double complex[:, :, ::1] L,
               const double complex[:, :, ::1] H,
               const double[::1] ks,
               const double[::1] hs,
               double complex[:, ::1] U,
               const long[::1] add_at,
               const double complex[:, ::1] add_vecs,
               const long[::1] rec_at,
               double complex[:, :, ::1] out):
    """March a batch of vectors, row ``b`` under the generator i*(ks[b]*L + H).

    Impulses are shared by the whole batch; ``out[r, b]`` is row ``b`` at
    record node ``rec_at[r]`` (taken after impulses at that node).
    """
    cdef Py_ssize_t n = hs.shape[0]
    cdef Py_ssize_t nb = U.shape[0]
    cdef Py_ssize_t d = U.shape[1]
    cdef Py_ssize_t n_add = add_at.shape[0]
    cdef Py_ssize_t n_rec = rec_at.shape[0]
    if L.shape[0] != 2 * n + 1 or H.shape[0] != 2 * n + 1:
        raise ValueError("need 2*len(hs)+1 generator samples")
    if L.shape[1] != d or L.shape[2] != d or H.shape[1] != d or H.shape[2] != d:
        raise ValueError("dimension mismatch")
    if ks.shape[0] != nb:
        raise ValueError("one k per batch row")
    if add_vecs.shape[0] != n_add or out.shape[0] != n_rec:
        raise ValueError("impulse/record arrays mismatch")
    if n_rec and (out.shape[1] != nb or out.shape[2] != d):
        raise ValueError("output shape mismatch")
    if n_add and add_vecs.shape[1] != d:
        raise ValueError("impulse dimension mismatch")
    cdef Py_ssize_t j
    for j in range(1, n_add):
        if add_at[j] < add_at[j - 1]:
            raise ValueError("impulse indices must be sorted")
    for j in range(1, n_rec):
        if rec_at[j] < rec_at[j - 1]:
            raise ValueError("record indices must be sorted")
    if (n_add and (add_at[0] < 0 or add_at[n_add - 1] > n)) or \
            (n_rec and (rec_at[0] < 0 or rec_at[n_rec - 1] > n)):
        raise ValueError("impulse/record indices must lie within the grid")
    if nb == 0 or d == 0:
        return
    work_arr = np.zeros(10 * d, dtype=np.float64)
    cdef double[::1] work = work_arr
    cdef double* k1 = &work[0]
    cdef double* k2 = &work[2 * d]
    cdef double* k3 = &work[4 * d]
    cdef double* k4 = &work[6 * d]
    cdef double* tmp = &work[8 * d]
    cdef const double* Lp = <const double*> &L[0, 0, 0]
    cdef const double* Hp = <const double*> &H[0, 0, 0]
    cdef const double* av = <const double*> &add_vecs[0, 0] if n_add else NULL
    cdef double* op = <double*> &out[0, 0, 0] if n_rec else NULL
    cdef double* u
    cdef Py_ssize_t m = 2 * d * d
    cdef Py_ssize_t dd = 2 * d
    cdef Py_ssize_t b, i, q, ia, ir
    cdef double h, kr, s0, s1, s2
    with nogil:
        for b in range(nb):
            u = <double*> &U[b, 0]
            kr = ks[b]
            ia = 0
            ir = 0
            for i in range(n + 1):
                while ia < n_add and add_at[ia] == i:
                    for q in range(dd):
                        u[q] = u[q] + av[ia * dd + q]
                    ia += 1
                while ir < n_rec and rec_at[ir] == i:
                    for q in range(dd):
                        op[(ir * nb + b) * dd + q] = u[q]
                    ir += 1
                if i == n:
                    break
                h = hs[i]
                s0 = 0.5 * h
                _family_rhs(k1, Lp + 2 * i * m, Hp + 2 * i * m, kr, u, d)
                for q in range(dd):
                    tmp[q] = u[q] + s0 * k1[q]
                _family_rhs(k2, Lp + (2 * i + 1) * m, Hp + (2 * i + 1) * m, kr, tmp, d)
                for q in range(dd):
                    tmp[q] = u[q] + s0 * k2[q]
                _family_rhs(k3, Lp + (2 * i + 1) * m, Hp + (2 * i + 1) * m, kr, tmp, d)
                for q in range(dd):
                    tmp[q] = u[q] + h * k3[q]
                _family_rhs(k4, Lp + (2 * i + 2) * m, Hp + (2 * i + 2) * m, kr, tmp, d)
                s1 = h / 6.0
                s2 = h / 3.0
                for q in range(dd):
                    u[q] = u[q] + s1 * (k1[q] + k4[q]) + s2 * (k2[q] + k3[q])
