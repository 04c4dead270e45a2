# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: CSR power iteration, multilinear interpolation and
systematic resampling."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def power_iterate(const cnp.int32_t[::1] indptr, const cnp.int32_t[::1] indices,
                  const double[::1] data, double shift, double[::1] x, Py_ssize_t n_iter):
    """Run ``n_iter`` steps of ``x <- (A + shift I) x / max`` in place.

    Returns the last normalization factor (the Perron root estimate of
    ``A + shift I``).
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef double[::1] y = np.empty(n)
    cdef Py_ssize_t it, i, k
    cdef double s, m = 0.0
    for it in range(n_iter):
        m = 0.0
        for i in range(n):
            s = shift * x[i]
            for k in range(indptr[i], indptr[i + 1]):
                s += data[k] * x[indices[k]]
            y[i] = s
            if s > m:
                m = s
        if m <= 0.0:
            return m
        for i in range(n):
            x[i] = y[i] / m
    return m


def multilinear_interp(const double[:, ::1] values, const double[::1] lo, const double[::1] h,
                       const cnp.int64_t[::1] shape, const double[:, ::1] points):
    """Interpolate node values of shape ``(N, k)`` on a C-ordered tensor grid.

    Points outside the box are clamped to it.
    """
    cdef Py_ssize_t P = points.shape[0], d = points.shape[1], k = values.shape[1]
    cdef double[:, ::1] out = np.zeros((P, k))
    cdef cnp.int64_t[::1] base = np.empty(d, dtype=np.int64)
    cdef double[::1] frac = np.empty(d)
    cdef cnp.int64_t[::1] stride = np.empty(d, dtype=np.int64)
    cdef Py_ssize_t p, j, c, corner, idx, c_bits, n_corners = 1 << d
    cdef double t, w
    stride[d - 1] = 1
    for j in range(d - 2, -1, -1):
        stride[j] = stride[j + 1] * shape[j + 1]
    for p in range(P):
        for j in range(d):
            t = (points[p, j] - lo[j]) / h[j]
            if t < 0.0:
                t = 0.0
            if t > shape[j] - 1:
                t = shape[j] - 1
            base[j] = <cnp.int64_t>floor(t)
            if base[j] >= shape[j] - 1:
                base[j] = shape[j] - 2
            frac[j] = t - base[j]
        for corner in range(n_corners):
            w = 1.0
            idx = 0
            c_bits = corner
            for j in range(d):
                if (c_bits >> (d - 1 - j)) & 1:
                    w *= frac[j]
                    idx += (base[j] + 1) * stride[j]
                else:
                    w *= 1.0 - frac[j]
                    idx += base[j] * stride[j]
            if w != 0.0:
                for c in range(k):
                    out[p, c] += w * values[idx, c]
    return np.asarray(out)


def systematic_resample(const double[::1] weights, double u0):
    """Indices drawn by systematic resampling from normalized ``weights``."""
    cdef Py_ssize_t n = weights.shape[0], i = 0, j
    cdef cnp.int64_t[::1] out = np.empty(n, dtype=np.int64)
    cdef double cum = weights[0], u
    for j in range(n):
        u = (u0 + j) / n
        while u > cum and i < n - 1:
            i += 1
            cum += weights[i]
        out[j] = i
    return np.asarray(out)
