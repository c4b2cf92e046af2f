# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np

from libc.math cimport sqrt, NAN


def spd_solve_batch(A, B, double rtol):
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    cdef double[:, :, ::1] a = A
    cdef double[:, :, ::1] b = B
    cdef Py_ssize_t m = a.shape[0], d = a.shape[1], k = b.shape[2]
    X = np.empty((m, d, k), dtype=np.float64)
    ok = np.ones(m, dtype=np.uint8)
    cdef double[:, :, ::1] x = X
    cdef unsigned char[::1] okv = ok
    cdef double[:, ::1] L = np.zeros((d, d), dtype=np.float64)
    cdef Py_ssize_t i, j, r, q, c
    cdef double s, pmin, pmax, root
    cdef bint good

    with nogil:
        for i in range(m):
            good = True
            pmin = 0.0
            pmax = 0.0
            for j in range(d):
                s = a[i, j, j]
                for q in range(j):
                    s = s - L[j, q] * L[j, q]
                if j == 0 or s < pmin:
                    pmin = s
                if j == 0 or s > pmax:
                    pmax = s
                if s <= 0.0:
                    good = False
                    break
                root = sqrt(s)
                L[j, j] = root
                for r in range(j + 1, d):
                    s = a[i, r, j]
                    for q in range(j):
                        s = s - L[r, q] * L[j, q]
                    L[r, j] = s / root
            if good and pmin < rtol * pmax:
                good = False
            if not good:
                okv[i] = 0
                for j in range(d):
                    for c in range(k):
                        x[i, j, c] = NAN
                continue
            for c in range(k):
                for j in range(d):
                    s = b[i, j, c]
                    for q in range(j):
                        s = s - L[j, q] * x[i, q, c]
                    x[i, j, c] = s / L[j, j]
                for j in range(d - 1, -1, -1):
                    s = x[i, j, c]
                    for q in range(j + 1, d):
                        s = s - L[q, j] * x[i, q, c]
                    x[i, j, c] = s / L[j, j]
    return X, ok.astype(bool)


def signed_rank_counts(weights):
    w_arr = np.ascontiguousarray(weights, dtype=np.int64)
    cdef long long[::1] w = w_arr
    cdef Py_ssize_t n = w.shape[0], i, s
    cdef long long total = 0, wi
    for i in range(n):
        total += w[i]
    out = np.zeros(total + 1, dtype=np.int64)
    cdef long long[::1] counts = out
    counts[0] = 1
    cdef long long reach = 0
    with nogil:
        for i in range(n):
            wi = w[i]
            reach += wi
            # descending sweep keeps this a 0/1 knapsack
            for s in range(reach, wi - 1, -1):
                counts[s] += counts[s - wi]
    return out


def pairwise_sq_dists(X, Y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    cdef double[:, ::1] xv = X
    cdef double[:, ::1] yv = Y
    cdef Py_ssize_t n = xv.shape[0], m = yv.shape[0], p = xv.shape[1], i, j, q
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double s, t
    with nogil:
        for i in range(n):
            for j in range(m):
                s = 0.0
                for q in range(p):
                    t = xv[i, q] - yv[j, q]
                    s = s + t * t
                o[i, j] = s
    return out
