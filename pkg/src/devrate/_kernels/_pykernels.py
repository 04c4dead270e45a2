"""Pure-numpy versions of the compiled kernels, used when the extension is absent."""

import numpy as np
import scipy.sparse as sp


def power_iterate(indptr, indices, data, shift, x, n_iter):
    n = x.shape[0]
    A = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    m = 0.0
    for _ in range(int(n_iter)):
        y = A @ x + shift * x
        m = float(y.max())
        if m <= 0.0:
            return m
        x[:] = y / m
    return m


def multilinear_interp(values, lo, h, shape, points):
    P, d = points.shape
    shape = np.asarray(shape, dtype=np.int64)
    t = (points - lo) / h
    t = np.clip(t, 0.0, shape - 1)
    base = np.minimum(np.floor(t).astype(np.int64), shape - 2)
    frac = t - base
    stride = np.ones(d, dtype=np.int64)
    for j in range(d - 2, -1, -1):
        stride[j] = stride[j + 1] * shape[j + 1]
    out = np.zeros((P, values.shape[1]))
    for corner in range(1 << d):
        bits = np.array([(corner >> (d - 1 - j)) & 1 for j in range(d)])
        w = np.prod(np.where(bits, frac, 1.0 - frac), axis=1)
        idx = (base + bits) @ stride
        out += w[:, None] * values[idx]
    return out


def systematic_resample(weights, u0):
    n = weights.shape[0]
    u = (u0 + np.arange(n)) / n
    cum = np.cumsum(weights)
    return np.minimum(np.searchsorted(cum, u, side="left"), n - 1).astype(np.int64)
