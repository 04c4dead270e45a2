import numpy as np
import pytest

from devrate.errors import BlowUpError, DegeneracyError, NumericRangeError, OutOfTheoryError, ParameterError
from devrate.expr import field_from_expression
from devrate.grid import Mesh, assemble_generator
from devrate.model import DiffusionModel, langevin, ornstein_uhlenbeck
from devrate.scgf import (
    scgf_cloning,
    scgf_monte_carlo,
    scgf_spectral,
    simulate,
)


def x_field():
    return field_from_expression("x", 1, ["x"], name="x")


def test_ou_spectral_curve(ou_gen):
    curve = scgf_spectral(ou_gen, x_field(), [-1, -0.5, 0.5, 1])
    assert np.allclose(curve.thetas, [-1, -0.5, 0, 0.5, 1])
    assert np.allclose(curve.values, [1, 0.25, 0, 0.25, 1], atol=1e-3)
    assert curve.values[2] == 0.0
    assert not curve.convexity_violations()
    assert curve.admissibility is not None and curve.admissibility.admissible
    assert set(curve.methods) == {"spectral"}
    assert np.all(curve.stderr == 0)


def test_shift_moves_curve_linearly(ou_gen):
    thetas = [-1, -0.5, 0.5, 1]
    a = scgf_spectral(ou_gen, x_field(), thetas)
    b = scgf_spectral(ou_gen, field_from_expression("x + 2", 1, ["x"]), thetas)
    assert np.allclose(b.values - a.values, 2 * a.thetas, atol=1e-10)


def test_quadratic_observable_out_of_theory(ou_gen):
    f = field_from_expression("x**2", 1, ["x"])
    with pytest.raises(OutOfTheoryError):
        scgf_spectral(ou_gen, f, [0.1])
    curve = scgf_spectral(ou_gen, f, [3 / 16], override=True)
    assert curve.values[-1] == pytest.approx(0.25, abs=5e-3)


def test_spectral_requires_mesh(ou):
    with pytest.raises(ParameterError):
        scgf_spectral(ou, x_field(), [0.5])


def test_zero_dynamics_constant_path():
    m = DiffusionModel(1, 1, lambda X: np.zeros_like(X), lambda X: np.zeros((X.shape[0], 1, 1)),
                       constant_sigma=np.zeros((1, 1)))
    acc = simulate(m, [0.7], 0.01, 5.0, seed=1, observables={"f": lambda X: X[:, 0] ** 2 + 1})
    assert np.all(acc.state == 0.7)
    assert acc.integrals["f"] == pytest.approx((0.49 + 1) * 5.0, rel=1e-12)


def test_ou_stationary_variance():
    acc = simulate(ornstein_uhlenbeck(), [0.0], 0.01, 1e4, seed=11, observables={"x2": lambda X: X[:, 0] ** 2})
    assert abs(acc.time_average("x2") - 1.0) <= 3 * acc.batch_stderr("x2") + 0.01


def test_langevin_energy_average():
    acc = simulate(langevin(None, 1.0, 1), [0.0, 0.0], 0.01, 1e4, seed=5,
                   observables={"H": lambda X: 0.5 * (X ** 2).sum(axis=1)})
    assert abs(acc.time_average("H") - 1.0) <= 3 * acc.batch_stderr("H") + 0.01


def test_histogram_matches_time_average():
    mesh = Mesh.box(-8, 8, 401, 1)
    acc = simulate(ornstein_uhlenbeck(), [0.0], 0.01, 200, seed=2, mesh=mesh,
                   observables={"x": lambda X: X[:, 0]})
    L = acc.empirical_measure
    assert L.sum() == pytest.approx(1.0)
    # cloud-in-cell deposit reproduces linear observables exactly
    assert np.sum(L * mesh.points()[:, 0]) == pytest.approx(acc.time_average("x"), abs=1e-10)


def test_simulation_is_deterministic():
    a = simulate(ornstein_uhlenbeck(), [0.3], 0.01, 20, seed=99, observables={"x": lambda X: X[:, 0]})
    b = simulate(ornstein_uhlenbeck(), [0.3], 0.01, 20, seed=99, observables={"x": lambda X: X[:, 0]})
    c = simulate(ornstein_uhlenbeck(), [0.3], 0.01, 20, seed=100, observables={"x": lambda X: X[:, 0]})
    assert a.integrals == b.integrals and np.array_equal(a.state, b.state)
    assert a.integrals != c.integrals


def test_blow_up_detected():
    m = DiffusionModel(1, 1, lambda X: X ** 3, lambda X: np.ones((X.shape[0], 1, 1)),
                       constant_sigma=np.ones((1, 1)))
    with pytest.raises(BlowUpError) as info:
        simulate(m, [2.0], 0.01, 10, seed=0, safety=1e3)
    assert info.value.time > 0


def test_simulate_rejects_bad_steps(ou):
    with pytest.raises(ParameterError):
        simulate(ou, [0.0], 0.0, 1.0)
    with pytest.raises(ParameterError):
        simulate(ou, [0.0], 0.1, 0.01)


def test_monte_carlo_zero_theta(ou):
    est = scgf_monte_carlo(ou, lambda X: X[:, 0], 0.0, 100, 10, 0.01, seed=1)
    assert est.estimate == 0.0 and est.stderr == 0.0


def test_monte_carlo_ou(ou):
    est = scgf_monte_carlo(ou, lambda X: X[:, 0], 0.5, 10_000, 20, 0.01, seed=3)
    assert abs(est.estimate - 0.25) <= 3 * est.stderr


def test_monte_carlo_requires_replicas(ou):
    with pytest.raises(ParameterError):
        scgf_monte_carlo(ou, lambda X: X[:, 0], 0.5, 50, 10, 0.01)


def test_monte_carlo_overflow(ou):
    with pytest.raises(NumericRangeError):
        scgf_monte_carlo(ou, lambda X: X[:, 0] + 100.0, 1.0, 100, 10, 0.01, seed=0)


@pytest.mark.parametrize("theta", [0.5, 1.0])
def test_cloning_matches_spectral(ou, ou_gen, theta):
    ref = scgf_spectral(ou_gen, x_field(), [theta]).values[-1]
    est = scgf_cloning(ou, lambda X: X[:, 0], theta, 2000, 50, 0.01, 0.5, seed=7)
    assert abs(est.estimate - ref) <= 3 * est.stderr


def test_cloning_zero_theta(ou):
    est = scgf_cloning(ou, lambda X: X[:, 0], 0.0, 100, 2, 0.01, 0.5, seed=1)
    assert est.estimate == 0.0


def test_cloning_degeneracy(ou):
    with pytest.raises(DegeneracyError):
        scgf_cloning(ou, lambda X: 50 * X[:, 0] ** 2, 5.0, 100, 20, 0.01, 10.0, seed=1, burn_in=0.0)


def test_cloning_parameter_checks(ou):
    with pytest.raises(ParameterError):
        scgf_cloning(ou, lambda X: X[:, 0], 1.0, 100, 10, 0.01, 0.015)
    with pytest.raises(ParameterError):
        scgf_cloning(ou, lambda X: X[:, 0], 1.0, 10, 10, 0.01, 0.5)


def test_cloning_deterministic(ou):
    a = scgf_cloning(ou, lambda X: X[:, 0], 0.5, 200, 5, 0.01, 0.5, seed=4)
    b = scgf_cloning(ou, lambda X: X[:, 0], 0.5, 200, 5, 0.01, 0.5, seed=4)
    assert a.estimate == b.estimate
