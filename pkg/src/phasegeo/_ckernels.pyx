# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the objective, gradient and Hessian quadratic form.

Matrix-vector products go through BLAS (via scipy's cython_blas); the
per-row residual work and the reductions run in C.  Row sums are accumulated
in fixed blocks of BLOCK rows and the block partials are reduced pairwise.
"""

import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport zgemv, zgemm

cnp.import_array()

cdef enum:
    BLOCK = 256


cdef double _pairwise(double* v, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    cdef Py_ssize_t mid
    if hi - lo == 1:
        return v[lo]
    if hi - lo == 0:
        return 0.0
    mid = lo + (hi - lo) // 2
    return _pairwise(v, lo, mid) + _pairwise(v, mid, hi)


cdef void _matvec(const double complex[:, ::1] rows, const double complex* x,
                  double complex* out) noexcept nogil:
    # rows is m x n row-major, i.e. an n x m column-major matrix A with A^T = rows.
    cdef int n = <int>rows.shape[1], m = <int>rows.shape[0]
    cdef int one = 1
    cdef double complex alpha = 1.0, beta = 0.0
    cdef char trans = b'T'
    zgemv(&trans, &n, &m, &alpha, <double complex*>&rows[0, 0], &n,
          <double complex*>x, &one, &beta, out, &one)


cdef void _rmatvec_conj(const double complex[:, ::1] rows, double complex* w,
                        double complex* out) noexcept nogil:
    # out = conj(rows)^T w = conj(A conj(w)); w is conjugated in place.
    cdef int n = <int>rows.shape[1], m = <int>rows.shape[0]
    cdef int one = 1, k
    cdef double complex alpha = 1.0, beta = 0.0
    cdef char trans = b'N'
    for k in range(m):
        w[k] = w[k].real - 1j * w[k].imag
    zgemv(&trans, &n, &m, &alpha, <double complex*>&rows[0, 0], &n,
          w, &one, &beta, out, &one)
    for k in range(n):
        out[k] = out[k].real - 1j * out[k].imag


cdef double _residual_sum(const double complex* u, const double[::1] y2, Py_ssize_t m,
                          double complex* w, double* parts) noexcept nogil:
    # Blocked sum of r_k^2 with r_k = |u_k|^2 - y_k^2; stores w_k = r_k u_k when w is set.
    cdef Py_ssize_t nb = (m + BLOCK - 1) // BLOCK
    cdef Py_ssize_t b, k
    cdef double acc, r
    for b in range(nb):
        acc = 0.0
        for k in range(b * BLOCK, min(m, (b + 1) * BLOCK)):
            r = u[k].real * u[k].real + u[k].imag * u[k].imag - y2[k]
            acc = acc + r * r
            if w != NULL:
                w[k] = r * u[k]
        parts[b] = acc
    return _pairwise(parts, 0, nb)


def objective(const double complex[:, ::1] rows, const double[::1] y2, const double complex[::1] z):
    cdef Py_ssize_t m = rows.shape[0]
    cdef double complex[::1] u = np.empty(m, dtype=np.complex128)
    cdef double[::1] parts = np.empty((m + BLOCK - 1) // BLOCK)
    cdef double acc
    with nogil:
        _matvec(rows, &z[0], &u[0])
        acc = _residual_sum(&u[0], y2, m, NULL, &parts[0])
    return 0.5 * acc / m


def objective_grad(const double complex[:, ::1] rows, const double[::1] y2, const double complex[::1] z):
    cdef Py_ssize_t m = rows.shape[0], n = rows.shape[1], j
    cdef double complex[::1] u = np.empty(m, dtype=np.complex128)
    cdef double complex[::1] w = np.empty(m, dtype=np.complex128)
    cdef double[::1] parts = np.empty((m + BLOCK - 1) // BLOCK)
    grad_arr = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] grad = grad_arr
    cdef double acc
    with nogil:
        _matvec(rows, &z[0], &u[0])
        acc = _residual_sum(&u[0], y2, m, &w[0], &parts[0])
        _rmatvec_conj(rows, &w[0], &grad[0])
        for j in range(n):
            grad[j] = grad[j] / m
    return 0.5 * acc / m, grad_arr


def hessian_form(const double complex[:, ::1] rows, const double[::1] y2,
                 const double complex[::1] z, const double complex[::1] delta):
    cdef int m = <int>rows.shape[0], n = <int>rows.shape[1]
    cdef int two = 2
    cdef double complex[::1, :] zd = np.empty((n, 2), dtype=np.complex128, order="F")
    cdef double complex[::1, :] uv = np.empty((m, 2), dtype=np.complex128, order="F")
    cdef double complex alpha = 1.0, beta = 0.0
    cdef char ta = b'T', tb = b'N'
    cdef Py_ssize_t nb = (m + BLOCK - 1) // BLOCK
    cdef double[::1] part = np.zeros(nb)
    cdef Py_ssize_t k, b, j
    cdef double ur, ui, vr, vi, acc, cr, ci
    with nogil:
        for j in range(n):
            zd[j, 0] = z[j]
            zd[j, 1] = delta[j]
        zgemm(&ta, &tb, &m, &two, &n, &alpha, <double complex*>&rows[0, 0], &n,
              &zd[0, 0], &n, &beta, &uv[0, 0], &m)
        for b in range(nb):
            acc = 0.0
            for k in range(b * BLOCK, min(m, (b + 1) * BLOCK)):
                ur = uv[k, 0].real
                ui = uv[k, 0].imag
                vr = uv[k, 1].real
                vi = uv[k, 1].imag
                # conj(u) * v
                cr = ur * vr + ui * vi
                ci = ur * vi - ui * vr
                acc = acc + (2.0 * (ur * ur + ui * ui) - y2[k]) * (vr * vr + vi * vi) + cr * cr - ci * ci
            part[b] = acc
        acc = _pairwise(&part[0], 0, nb)
    return 2.0 * acc / m
