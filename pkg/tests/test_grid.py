from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from devrate.errors import MeasureError, MeshError, UnsupportedDiffusionError
from devrate.grid import (
    Mesh,
    assemble_generator,
    feynman_kac_drift_check,
    gradient_operator,
    sample,
    split_generator,
    witten_similarity,
)
from devrate.model import langevin, ornstein_uhlenbeck, overdamped_quartic
from devrate.spectral import invariant_measure

SCHEMES = ["gibbs", "hybrid", "upwind"]


def test_builtin_generator_structure(builtin_gen):
    rs = builtin_gen.row_sums()
    assert np.max(np.abs(rs)) <= 1e-12 * max(builtin_gen.scale, 1.0)
    assert builtin_gen.min_offdiagonal() >= 0.0
    assert builtin_gen.check()["valid"]


@pytest.mark.parametrize("scheme", SCHEMES)
@pytest.mark.parametrize("model", [ornstein_uhlenbeck(1.0, 1), overdamped_quartic(1)], ids=lambda m: m.name)
def test_every_scheme_is_a_markov_generator(model, scheme):
    gen = assemble_generator(model, Mesh.box(-5, 5, 101, 1), scheme)
    assert gen.check()["valid"]
    assert gen.scheme == scheme


def test_langevin_schemes_valid():
    for scheme in SCHEMES:
        gen = assemble_generator(langevin(None, 0.5, 1), Mesh.box(-6, 6, 41, 2), scheme)
        assert gen.check()["valid"]


def test_mesh_errors():
    with pytest.raises(MeshError):
        Mesh.box(-1, 1, 7, 1)
    with pytest.raises(MeshError):
        Mesh.box(1, -1, 20, 1)
    with pytest.raises(MeshError):
        Mesh.box(-1, 1, 3000, 2)
    with pytest.raises(MeshError):
        assemble_generator(ornstein_uhlenbeck(1.0, 2), Mesh.box(-1, 1, 20, 1))


def test_cross_diffusion_rejected():
    m = ornstein_uhlenbeck(1.0, 2)
    S = np.array([[1.0, 0.5], [0.5, 1.0]])
    m = replace(m, constant_S=S, constant_sigma=np.linalg.cholesky(2 * S))
    with pytest.raises(UnsupportedDiffusionError):
        assemble_generator(m, Mesh.box(-4, 4, 21, 2))


def test_mesh_geometry():
    mesh = Mesh.box(-1, 1, 11, 2)
    assert mesh.size == 121
    assert np.allclose(mesh.h, 0.2)
    assert mesh.ravel(mesh.unravel(37)) == 37
    assert mesh.boundary_mask().sum() == 40
    assert np.allclose(mesh.points()[mesh.nearest([0.31, -0.5])], [0.4, -0.6]) or \
        np.allclose(mesh.points()[mesh.nearest([0.31, -0.5])], [0.4, -0.4])
    d = mesh.doubled()
    assert d.lo == (-2.0, -2.0) and np.allclose(d.h, mesh.h)


def taylor_error(scheme, n, R=8.0, window=4.0):
    mesh = Mesh.box(-R, R, n, 1)
    gen = assemble_generator(ornstein_uhlenbeck(), mesh, scheme)
    x = mesh.points()[:, 0]
    err = np.abs(gen @ (x ** 2) - (2 - 2 * x ** 2))
    return float(np.max(err[np.abs(x) <= window])), float(mesh.h[0])


@pytest.mark.parametrize("scheme", SCHEMES)
def test_taylor_oracle(scheme):
    err, h = taylor_error(scheme, 801)
    assert err <= 20 * h


@pytest.mark.parametrize("scheme", SCHEMES)
def test_refinement_at_least_linear(scheme):
    errs = [taylor_error(scheme, n)[0] for n in (201, 401, 801)]
    for coarse, fine in zip(errs, errs[1:]):
        assert fine <= coarse / 1.9 or fine < 1e-9


def test_split_reversible_and_identity(ou_gen):
    mu = invariant_measure(ou_gen)
    s = split_generator(ou_gen, mu)
    assert s.antisymmetric_ratio <= 1e-8
    diff = (s.symmetric + s.antisymmetric - ou_gen.matrix)
    assert (abs(diff).max() if diff.nnz else 0.0) <= 1e-14 * ou_gen.scale


def test_split_rejects_bad_measure(ou_gen):
    mu = np.ones(ou_gen.size)
    mu[3] = 0.0
    with pytest.raises(MeasureError):
        split_generator(ou_gen, mu)
    with pytest.raises(MeasureError):
        split_generator(ou_gen, np.ones(5))


def test_langevin_antisymmetric_part_is_hamiltonian_transport():
    errs = []
    for n in (81, 161):
        mesh = Mesh.box(-8, 8, n, 2)
        gen = assemble_generator(langevin(None, 1.0, 1), mesh)
        LA = split_generator(gen, invariant_measure(gen)).antisymmetric
        X = mesh.points()
        q, p = X[:, 0], X[:, 1]
        phi = np.sin(q) * np.cos(p)
        h = mesh.h[0]
        # independent central-difference assembly of p d_q - q d_p
        Phi = phi.reshape(mesh.n)
        dq = np.gradient(Phi, h, axis=0).ravel()
        dp = np.gradient(Phi, h, axis=1).ravel()
        ham = p * dq - q * dp
        inside = np.all(np.abs(X) <= 3, axis=1)
        errs.append(np.max(np.abs((LA @ phi - ham)[inside])))
    assert errs[1] <= errs[0] / 1.8
    assert errs[1] <= 0.2


def test_witten_similarity_spectrum():
    gen = assemble_generator(ornstein_uhlenbeck(), Mesh.box(-6, 6, 61, 1), "upwind")
    mu = invariant_measure(gen)
    T = witten_similarity(gen, mu)
    ev_L = np.sort_complex(np.linalg.eigvals(gen.matrix.toarray()))
    ev_T = np.sort_complex(np.linalg.eigvals(T.toarray()))
    assert np.max(np.abs(ev_L - ev_T)) <= 1e-10 * gen.scale


@pytest.mark.parametrize("scheme", ["upwind", "hybrid"])
def test_witten_symmetric_on_reversible_model(scheme):
    for n in (101, 401):
        gen = assemble_generator(ornstein_uhlenbeck(), Mesh.box(-6, 6, n, 1), scheme)
        T = witten_similarity(gen, invariant_measure(gen))
        assert abs(T - T.T).max() <= 1e-10 * gen.scale


def test_ou_spectral_gap(ou_gen):
    mesh = Mesh.box(-8, 8, 801, 1)
    gen = assemble_generator(ornstein_uhlenbeck(), mesh)
    T = witten_similarity(gen, invariant_measure(gen)).toarray()
    ev = np.sort(np.linalg.eigvalsh(-(T + T.T) / 2))
    assert abs(ev[0]) <= 1e-8
    assert ev[1] == pytest.approx(1.0, abs=1e-2)


def test_drift_check_ou(ou_gen):
    x = ou_gen.mesh.points()[:, 0]
    res = feynman_kac_drift_check(ou_gen, 0.1 * np.tanh(x), np.exp(x ** 2 / 4))
    assert res.passed and res.a > 0


def test_gradient_operator():
    mesh = Mesh.box(0, 1, 11, 2)
    G, axis, src, dst = gradient_operator(mesh)
    X = mesh.points()
    g = G @ (3 * X[:, 0] - 2 * X[:, 1])
    assert np.allclose(g[axis == 0], 3) and np.allclose(g[axis == 1], -2)
    assert np.allclose(G @ np.ones(mesh.size), 0)


def test_write_coo(tmp_path, ou_gen):
    path = tmp_path / "L.txt"
    ou_gen.write_coo(path)
    data = np.loadtxt(path)
    M = sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=ou_gen.matrix.shape)
    assert abs(M - ou_gen.matrix).max() == 0


def test_sample_forms(ou_mesh):
    x = ou_mesh.points()[:, 0]
    assert np.array_equal(sample(ou_mesh, lambda X: X[:, 0]), x)
    assert np.all(sample(ou_mesh, 2.0) == 2.0)
