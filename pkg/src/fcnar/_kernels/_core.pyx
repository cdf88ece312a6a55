# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled time recursions for FCNAR simulation.

Both kernels take the weight matrix in CSR form and work in place on
``X`` (N x L): columns ``< start`` hold the initial states, the remaining
columns hold the innovations on entry and the simulated values on exit.
They return the first column index at which a non-finite value appeared,
or -1.
"""
from libc.math cimport isfinite, pow

import numpy as np


def network_recursion(const double[:, :, ::1] A, const double[:, :, ::1] B,
                      const int[::1] w_indptr, const int[::1] w_indices,
                      const double[::1] w_data, double[:, ::1] X, Py_ssize_t start):
    """X[:, t] += sum_j A[j, :, t] X[:, t-j-1] + B[j, :, t] (W X)[:, t-j-1]."""
    cdef Py_ssize_t q = A.shape[0], N = X.shape[0], L = X.shape[1]
    cdef Py_ssize_t t, i, k, j, s
    cdef double acc, v
    cdef Py_ssize_t bad = -1
    WX_arr = np.zeros((N, L))
    cdef double[:, ::1] WX = WX_arr
    with nogil:
        for s in range(start):
            for i in range(N):
                acc = 0.0
                for k in range(w_indptr[i], w_indptr[i + 1]):
                    acc = acc + w_data[k] * X[w_indices[k], s]
                WX[i, s] = acc
        for t in range(start, L):
            for i in range(N):
                v = X[i, t]
                for j in range(q):
                    v = v + A[j, i, t] * X[i, t - j - 1] + B[j, i, t] * WX[i, t - j - 1]
                X[i, t] = v
            for i in range(N):
                if not isfinite(X[i, t]):
                    bad = t
            if bad >= 0:
                break
            for i in range(N):
                acc = 0.0
                for k in range(w_indptr[i], w_indptr[i + 1]):
                    acc = acc + w_data[k] * X[w_indices[k], t]
                WX[i, t] = acc
    return bad


def spline_recursion(const double[:, :, ::1] coef_a, const double[:, :, ::1] coef_b,
                     const double[:, ::1] knots, int order, Py_ssize_t d,
                     const int[::1] w_indptr, const int[::1] w_indices,
                     const double[::1] w_data, double[:, ::1] X, double[:, ::1] U,
                     Py_ssize_t start):
    """Recursion with spline coefficients and threshold U[:, t] = X[:, t-d].

    ``coef_a``/``coef_b`` have shape (q, N, order + K); lags a node does not
    use must be passed as zero rows.
    """
    cdef Py_ssize_t q = coef_a.shape[0], N = X.shape[0], L = X.shape[1]
    cdef Py_ssize_t P = coef_a.shape[2], K = knots.shape[1]
    cdef Py_ssize_t t, i, k, j, s, p
    cdef double acc, v, u, ca, cb, h
    cdef Py_ssize_t bad = -1
    WX_arr = np.zeros((N, L))
    cdef double[:, ::1] WX = WX_arr
    phi_arr = np.zeros(P)
    cdef double[::1] basis = phi_arr
    with nogil:
        for s in range(start):
            for i in range(N):
                acc = 0.0
                for k in range(w_indptr[i], w_indptr[i + 1]):
                    acc = acc + w_data[k] * X[w_indices[k], s]
                WX[i, s] = acc
        for t in range(start, L):
            for i in range(N):
                u = X[i, t - d]
                U[i, t] = u
                basis[0] = 1.0
                for p in range(1, order):
                    basis[p] = basis[p - 1] * u
                for k in range(K):
                    h = u - knots[i, k]
                    if h > 0.0:
                        basis[order + k] = 1.0 if order == 1 else pow(h, order - 1)
                    else:
                        basis[order + k] = 0.0
                v = X[i, t]
                for j in range(q):
                    ca = 0.0
                    cb = 0.0
                    for p in range(P):
                        ca = ca + coef_a[j, i, p] * basis[p]
                        cb = cb + coef_b[j, i, p] * basis[p]
                    v = v + ca * X[i, t - j - 1] + cb * WX[i, t - j - 1]
                X[i, t] = v
            for i in range(N):
                if not isfinite(X[i, t]):
                    bad = t
            if bad >= 0:
                break
            for i in range(N):
                acc = 0.0
                for k in range(w_indptr[i], w_indptr[i + 1]):
                    acc = acc + w_data[k] * X[w_indices[k], t]
                WX[i, t] = acc
    return bad
