# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels; see ``_kernels_py`` for the reference versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin

cnp.import_array()


def se_cross(X, Y, inv_h, double amp2):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] y = np.ascontiguousarray(Y, dtype=np.float64)
    cdef const double[::1] ih = np.ascontiguousarray(inv_h, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0], d = x.shape[1]
    if y.shape[1] != d or ih.shape[0] != d:
        raise ValueError("dimension mismatch")
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] K = out
    cdef Py_ssize_t i, j, k
    cdef double acc, t
    with nogil:
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for k in range(d):
                    t = (x[i, k] - y[j, k]) * ih[k]
                    acc += t * t
                K[i, j] = -0.5 * acc
    np.exp(out, out=out)
    out *= amp2
    return out


def sq_diffs(X):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    out = np.empty((d, n, n), dtype=np.float64)
    cdef double[:, :, ::1] D = out
    cdef Py_ssize_t i, j, k
    cdef double t, xi
    with nogil:
        for k in range(d):
            # full rows keep the writes contiguous
            for i in range(n):
                xi = x[i, k]
                for j in range(n):
                    t = xi - x[j, k]
                    D[k, i, j] = t * t
    return out


def se_gram_from_diffs(diffs, inv_h2, double amp2):
    cdef const double[:, :, ::1] D = np.ascontiguousarray(diffs, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(inv_h2, dtype=np.float64)
    cdef Py_ssize_t d = D.shape[0], n = D.shape[1]
    if w.shape[0] != d:
        raise ValueError("dimension mismatch")
    out = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] K = out
    cdef Py_ssize_t i, j, k
    cdef double wk
    with nogil:
        # one plane at a time so every pass streams through memory
        for k in range(d):
            wk = w[k]
            for i in range(n):
                for j in range(n):
                    K[i, j] += wk * D[k, i, j]
        for i in range(n):
            for j in range(n):
                K[i, j] *= -0.5
    # numpy's vectorized exp beats a scalar libm loop
    np.exp(out, out=out)
    out *= amp2
    return out


def polygon_areas(radii, double dphi):
    cdef const double[:, ::1] r = np.ascontiguousarray(radii, dtype=np.float64)
    cdef Py_ssize_t n_phi = r.shape[0], n_s = r.shape[1]
    out = np.zeros(n_s, dtype=np.float64)
    cdef double[::1] A = out
    cdef double c = 0.5 * sin(dphi)
    cdef Py_ssize_t j, k, kn
    with nogil:
        for k in range(n_phi):
            kn = k + 1
            if kn == n_phi:
                kn = 0
            for j in range(n_s):
                A[j] += r[k, j] * r[kn, j]
        for j in range(n_s):
            A[j] *= c
    return out
