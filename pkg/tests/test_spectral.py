import numpy as np
import pytest

from devrate.errors import OutOfTheoryError
from devrate.grid import Mesh, assemble_generator
from devrate.model import langevin, ornstein_uhlenbeck
from devrate.spectral import (
    box_doubling_sensitivity,
    doob_transform,
    ergodicity_decay,
    invariant_measure,
    principal_eigenpair,
)


def xs(gen):
    return gen.mesh.points()[:, 0]


def test_zero_observable(ou_gen):
    sol = principal_eigenpair(ou_gen, 0.0)
    assert abs(sol.eigenvalue) <= 1e-10
    assert np.allclose(sol.right, 1.0, atol=1e-8)
    assert sol.left.sum() == pytest.approx(1.0)


def test_solution_invariants(ou_gen):
    sol = principal_eigenpair(ou_gen, 0.5 * xs(ou_gen))
    assert np.all(sol.right > 0) and sol.right.max() == pytest.approx(1.0)
    assert np.all(sol.left >= 0)
    assert sol.residual <= 1e-8 * sol.scale
    assert sol.tilted_density.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("theta", [0.25, 0.5, 1.0])
def test_linear_observable_oracle(ou_gen, theta):
    x = xs(ou_gen)
    sol = principal_eigenpair(ou_gen, theta * x)
    assert sol.eigenvalue == pytest.approx(theta ** 2, abs=2e-3)
    inner = np.abs(x) <= 3
    logh = np.log(sol.right[inner])
    slope = np.polyfit(x[inner], logh, 1)[0]
    assert slope == pytest.approx(theta, rel=2e-2)


def test_quadratic_observable_oracle(ou_gen):
    x = xs(ou_gen)
    sol = principal_eigenpair(ou_gen, 3 / 16 * x ** 2)
    assert sol.eigenvalue == pytest.approx(0.25, abs=5e-3)


def test_doob_transform(ou_gen):
    x = xs(ou_gen)
    f = 0.5 * x
    sol = principal_eigenpair(ou_gen, f)
    doob = doob_transform(ou_gen, f, sol)
    assert doob.check()["valid"]
    assert np.max(np.abs(doob.row_sums())) <= 1e-10
    assert doob.diagnostics["row_sum_defect"] <= 1e-8

    mean = float(np.sum(invariant_measure(doob) * x))
    lp = principal_eigenpair(ou_gen, (0.5 + 1e-3) * x).eigenvalue
    lm = principal_eigenpair(ou_gen, (0.5 - 1e-3) * x).eigenvalue
    assert mean == pytest.approx((lp - lm) / 2e-3, abs=1e-3)


def test_doob_trivial(ou_gen):
    sol = principal_eigenpair(ou_gen, 0.0)
    doob = doob_transform(ou_gen, 0.0, sol)
    assert abs(doob.matrix - ou_gen.matrix).max() <= 1e-8 * ou_gen.scale


def test_invariant_measure_ou():
    mesh = Mesh.box(-8, 8, 801, 1)
    gen = assemble_generator(ornstein_uhlenbeck(), mesh)
    mu = invariant_measure(gen)
    x = xs(gen)
    ref = np.exp(-x ** 2 / 2) * mesh.h[0] / np.sqrt(2 * np.pi)
    assert np.sum(np.abs(mu - ref)) <= 1e-3
    assert mu.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(mu > 0)


def test_invariant_measure_langevin(langevin_ctx):
    mu = langevin_ctx.mu
    X = langevin_ctx.mesh.points()
    ref = np.exp(-(X ** 2).sum(axis=1) / 2)
    ref /= ref.sum()
    assert np.sum(np.abs(mu - ref)) <= 2e-2
    assert mu.sum() == pytest.approx(1.0, abs=1e-14)


def test_ergodicity_decay_ou(ou_gen):
    x = xs(ou_gen)
    W = np.exp(x ** 2 / 4)
    nu0 = np.zeros(ou_gen.size)
    nu0[ou_gen.mesh.nearest([2.0])] = 1.0
    fit = ergodicity_decay(ou_gen, W, nu0, [1, 2, 3, 4, 5, 6])
    assert fit.decaying
    assert fit.rate == pytest.approx(1.0, rel=0.1)
    double = ergodicity_decay(ou_gen, 2 * W, nu0, [1, 2, 3, 4, 5, 6])
    assert np.allclose(double.distances, 2 * np.asarray(fit.distances), rtol=1e-12)


def test_ergodicity_from_stationarity(ou_gen):
    mu = invariant_measure(ou_gen)
    fit = ergodicity_decay(ou_gen, np.ones(ou_gen.size), mu, [1, 2], mu=mu)
    assert max(fit.distances) <= 1e-10


@pytest.mark.parametrize("c", [-3.0, 0.7, 10.0])
def test_constant_shift_rule(ou_gen, c):
    f = 0.3 * xs(ou_gen)
    a = principal_eigenpair(ou_gen, f).eigenvalue
    b = principal_eigenpair(ou_gen, f + c).eigenvalue
    assert b - a == pytest.approx(c, abs=1e-12)


def test_convexity_and_mean_bound(ou_gen):
    x = xs(ou_gen)
    f = np.tanh(x) + 0.2 * x
    mu = invariant_measure(ou_gen)
    thetas = np.linspace(-1.5, 1.5, 13)
    lam = np.array([principal_eigenpair(ou_gen, t * f).eigenvalue for t in thetas])
    assert np.all(np.diff(lam, 2) >= -1e-9)
    assert np.all(lam >= thetas * np.sum(mu * f) - 1e-9)


def test_langevin_tilt():
    # integral of q is -p_T - gamma q_T + sqrt(2 gamma) W_T up to O(1) terms
    for n in (81, 161):
        mesh = Mesh.box(-8, 8, n, 2)
        gen = assemble_generator(langevin(None, 1.0, 1), mesh)
        sol = principal_eigenpair(gen, 0.5 * mesh.points()[:, 0])
        assert np.all(sol.left > 0) and np.all(sol.right > 0)
    assert sol.eigenvalue == pytest.approx(0.25, abs=1.5e-2)


def test_box_doubling_sensitivity():
    mesh = Mesh.box(-6, 6, 121, 1)
    out = box_doubling_sensitivity(ornstein_uhlenbeck(), lambda X: 0.5 * X[:, 0], mesh)
    assert out["sensitivity"] <= 1e-3
    assert out["box"] == pytest.approx(0.25, abs=1e-2)
