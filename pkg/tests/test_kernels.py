import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from devrate import _kernels
from devrate.grid import Mesh, assemble_generator
from devrate.model import ornstein_uhlenbeck

needs_cython = pytest.mark.skipif(_kernels.BACKEND != "cython", reason="compiled kernels not built")


@needs_cython
def test_power_iterate_parity():
    gen = assemble_generator(ornstein_uhlenbeck(), Mesh.box(-6, 6, 301, 1))
    Q = (gen.matrix + sp.diags(np.abs(gen.mesh.points()[:, 0]))).tocsr()
    shift = float(np.max(np.abs(Q.diagonal())))
    x1 = np.ones(Q.shape[0])
    x2 = x1.copy()
    m1 = _kernels.power_iterate(Q, shift, x1, 200, impl="python")
    m2 = _kernels.power_iterate(Q, shift, x2, 200, impl="cython")
    assert m1 == pytest.approx(m2, rel=1e-13)
    assert np.allclose(x1, x2, rtol=1e-12, atol=1e-300)


@needs_cython
@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
def test_interp_parity(dim, seed):
    rng = np.random.default_rng(seed)
    shape = rng.integers(2, 6, dim)
    vals = rng.normal(size=(int(np.prod(shape)), 2))
    lo = rng.normal(size=dim)
    h = rng.uniform(0.1, 2, dim)
    pts = lo + rng.uniform(-0.5, 1.5, (64, dim)) * (shape - 1) * h
    a = _kernels.multilinear_interp(vals, lo, h, shape, pts, impl="python")
    b = _kernels.multilinear_interp(vals, lo, h, shape, pts, impl="cython")
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_interp_reproduces_affine():
    shape = np.array([4, 5])
    lo, h = np.array([-1.0, 0.0]), np.array([0.5, 0.25])
    grid = np.stack(np.meshgrid(*[lo[i] + h[i] * np.arange(shape[i]) for i in range(2)], indexing="ij"), -1)
    f = (2 * grid[..., 0] - 3 * grid[..., 1] + 1).ravel()
    pts = np.random.default_rng(0).uniform([-1, 0], [0.5, 1], (30, 2))
    out = _kernels.multilinear_interp(f, lo, h, shape, pts)
    assert np.allclose(out, 2 * pts[:, 0] - 3 * pts[:, 1] + 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 200), st.floats(0, 0.999999), st.integers(0, 2 ** 32 - 1))
def test_resample_properties(n, u0, seed):
    w = np.random.default_rng(seed).random(n) + 1e-12
    w /= w.sum()
    idx = _kernels.systematic_resample(w, u0, impl="python")
    assert idx.shape == (n,) and np.all(np.diff(idx) >= 0)
    assert idx.min() >= 0 and idx.max() < n
    counts = np.bincount(idx, minlength=n)
    assert np.all(np.abs(counts - n * w) < 1 + 1e-9)
    if _kernels.BACKEND == "cython":
        assert np.array_equal(idx, _kernels.systematic_resample(w, u0, impl="cython"))


def test_pure_python_fallback():
    env = dict(os.environ, DEVRATE_PURE_PYTHON="1")
    code = ("import devrate, numpy as np; from devrate.grid import Mesh, assemble_generator; "
            "from devrate.model import ornstein_uhlenbeck; from devrate.spectral import principal_eigenpair; "
            "g = assemble_generator(ornstein_uhlenbeck(), Mesh.box(-8, 8, 201, 1)); "
            "print(devrate.BACKEND, principal_eigenpair(g, 0.5 * g.mesh.points()[:, 0]).eigenvalue)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, lam = out.stdout.split()
    assert backend == "python"
    assert float(lam) == pytest.approx(0.25, abs=2e-3)


def test_resolve_rejects_missing_backend(monkeypatch):
    monkeypatch.setattr(_kernels, "BACKEND", "python")
    with pytest.raises(ImportError):
        _kernels.multilinear_interp(np.zeros(4), [0.0], [1.0], [4], np.zeros((1, 1)), impl="cython")
