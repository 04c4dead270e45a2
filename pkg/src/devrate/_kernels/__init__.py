"""Kernel selection.

The compiled extension is used when it imports and ``DEVRATE_PURE_PYTHON`` is
unset; otherwise the numpy fallback is used.  ``BACKEND`` names the choice.
"""

import os

import numpy as np

from . import _pykernels

if os.environ.get("DEVRATE_PURE_PYTHON"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"


def _resolve(impl):
    """``None`` (active backend), ``"python"``, ``"cython"`` or a module."""
    if impl is None:
        return _impl
    if impl == "python":
        return _pykernels
    if impl == "cython":
        if BACKEND != "cython":
            raise ImportError("the compiled kernels are not available")
        return _impl
    return impl


def power_iterate(A, shift, x, n_iter, impl=None):
    """Apply ``n_iter`` normalized steps of ``A + shift I`` to ``x`` in place.

    ``A`` is a CSR matrix; returns the final max-normalization factor.
    """
    impl = _resolve(impl)
    indptr = np.ascontiguousarray(A.indptr, dtype=np.int32)
    indices = np.ascontiguousarray(A.indices, dtype=np.int32)
    data = np.ascontiguousarray(A.data, dtype=float)
    return float(impl.power_iterate(indptr, indices, data, float(shift), x, int(n_iter)))


def multilinear_interp(values, lo, h, shape, points, impl=None):
    """Multilinear interpolation of ``(N, k)`` node values at ``(P, d)`` points."""
    impl = _resolve(impl)
    v = np.ascontiguousarray(values, dtype=float)
    squeeze = v.ndim == 1
    if squeeze:
        v = v[:, None]
    out = impl.multilinear_interp(v, np.ascontiguousarray(lo, dtype=float),
                                  np.ascontiguousarray(h, dtype=float),
                                  np.ascontiguousarray(shape, dtype=np.int64),
                                  np.ascontiguousarray(points, dtype=float))
    out = np.asarray(out)
    return out[:, 0] if squeeze else out


def systematic_resample(weights, u0, impl=None):
    """Systematic resampling indices for normalized weights and offset ``u0 in [0, 1)``."""
    impl = _resolve(impl)
    return np.asarray(impl.systematic_resample(np.ascontiguousarray(weights, dtype=float), float(u0)))


python_impl = _pykernels
compiled_impl = None if BACKEND == "python" else _impl
