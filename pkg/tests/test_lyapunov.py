import numpy as np
import pytest

from devrate.errors import InsufficientWindowError, InvalidLyapunovError, OutOfTheoryError, ParameterError
from devrate.expr import field_from_expression
from devrate.lyapunov import (
    LyapunovSpec,
    check_kappa_admissible,
    check_nonlinear_condition,
    cramer_comparison,
    fit_growth,
    langevin_lyapunov_params,
    lyapunov_report,
    witten_closed_form,
    witten_potential,
)
from devrate.model import (
    ScalarField,
    apply_generator,
    carre_du_champ,
    nonreversible_rotational,
    ornstein_uhlenbeck,
    overdamped,
    overdamped_quartic,
    power_law_potential,
    probe_points,
    quadratic_potential,
    quartic_potential,
)


def fd_generator(model, W, X, h=1e-3):
    """Second-order central differences of b.grad W + S:Hess W for diagonal S."""
    S = np.broadcast_to(model.diffusion_matrix(X), (X.shape[0], model.dim, model.dim))
    b = model.b(X)
    out = np.zeros(X.shape[0])
    w0 = W(X)
    for i in range(model.dim):
        e = np.zeros(model.dim)
        e[i] = h
        wp, wm = W(X + e), W(X - e)
        out += b[:, i] * (wp - wm) / (2 * h) + S[:, i, i] * (wp - 2 * w0 + wm) / h ** 2
    return out


def psi_for(model, V, theta=0.5):
    return witten_potential(model, LyapunovSpec.exponential(V, theta))


def test_ou_witten_values():
    psi = psi_for(ornstein_uhlenbeck(), quadratic_potential(1.0, 1))
    assert psi(2.0) == pytest.approx(0.5, abs=1e-12)
    assert psi(0.0) == pytest.approx(-0.5, abs=1e-12)


@pytest.mark.parametrize("V", [quadratic_potential(1.0, 1), quartic_potential(1), power_law_potential(3.0, 2),
                               quadratic_potential(2.0, 2)], ids=lambda v: v.name)
@pytest.mark.parametrize("theta", [0.25, 0.5, 0.8])
def test_closed_form(V, theta):
    model = overdamped(V)
    X = probe_points(V.dim, 100)
    psi = psi_for(model, V, theta)
    ref = witten_closed_form(V, theta)
    assert np.max(np.abs(psi(X) - ref(X))) <= 1e-9 * (1 + np.max(np.abs(ref(X))))


@pytest.mark.parametrize("model", [ornstein_uhlenbeck(1.0, 2), overdamped_quartic(1), nonreversible_rotational()],
                         ids=lambda m: m.name)
def test_appendix_identity_and_finite_differences(model):
    V = model.structure.potential
    theta = 0.5
    X = probe_points(model.dim, 100, 2.0)
    psi = psi_for(model, V, theta)(X)
    ident = theta * (-apply_generator(model, V, X) - theta * carre_du_champ(model, V, V, X))
    assert np.allclose(psi, ident, rtol=1e-12, atol=1e-12)
    W = lambda Y: np.exp(theta * V.value(Y))  # noqa: E731
    # Richardson combination of two second-order stencils
    LW = (4 * fd_generator(model, W, X, 1e-3) - fd_generator(model, W, X, 2e-3)) / 3
    fd = -LW / W(X)
    assert np.max(np.abs(fd - psi) / (1 + np.abs(psi))) <= 1e-6


def test_nonpositive_W_rejected():
    W = field_from_expression("x", 1)
    with pytest.raises(InvalidLyapunovError):
        witten_potential(ornstein_uhlenbeck(), LyapunovSpec.from_W(W))


def test_nonlinear_condition_quartic():
    rep = check_nonlinear_condition(overdamped_quartic(1), quartic_potential(1), [0.5], (4, 16))
    assert rep.passed
    # (-LV - theta|grad V|^2) / (2|grad V|^2) -> (1 - theta)/2 for sigma = sqrt(2)
    assert rep.ratio_outer[0] == pytest.approx(0.25, abs=1e-2)


def test_nonlinear_condition_gaussian():
    rep = check_nonlinear_condition(ornstein_uhlenbeck(), quadratic_potential(1.0, 1), [0.5])
    assert rep.passed


def test_nonlinear_condition_bounded_potential_fails():
    V = field_from_expression("1/(1 + x^2)", 1)
    rep = check_nonlinear_condition(overdamped(V), V, [0.5])
    assert not rep.passed


def test_kappa_quartic():
    psi = psi_for(overdamped_quartic(1), quartic_potential(1))
    ok = check_kappa_admissible(psi, field_from_expression("1 + x^2", 1))
    assert ok.admissible and not ok.heavy_tail
    assert not check_kappa_admissible(psi, psi).admissible


def test_kappa_heavy_tail():
    V = power_law_potential(1.2, 1)
    psi = psi_for(overdamped(V), V)
    v = check_kappa_admissible(psi, field_from_expression("1 + sqrt(x^2)", 1))
    assert not v.admissible
    assert v.heavy_tail


def test_kappa_gaussian_boundary():
    psi = psi_for(ornstein_uhlenbeck(), quadratic_potential(1.0, 1))
    assert not check_kappa_admissible(psi, field_from_expression("1 + x^2", 1)).admissible
    assert check_kappa_admissible(psi, field_from_expression("sqrt(1 + x^2)", 1)).admissible


def test_kappa_window_too_short():
    psi = psi_for(ornstein_uhlenbeck(), quadratic_potential(1.0, 1))
    with pytest.raises(InsufficientWindowError):
        check_kappa_admissible(psi, field_from_expression("1 + x^2", 1), (4, 16))


def test_quartic_psi_exponent():
    fit = fit_growth(psi_for(overdamped_quartic(1), quartic_potential(1)), (4, 64))
    assert fit.exponent == pytest.approx(6.0, abs=0.1)


@pytest.mark.parametrize("q, expected", [(3, (3, 4, "super_gaussian")), (2, (2, 2, "gaussian")),
                                         (1.5, (1.5, 1, "sub_gaussian"))])
def test_cramer_regimes(q, expected):
    c, w, regime = cramer_comparison(q)
    assert c == pytest.approx(expected[0])
    assert w == pytest.approx(expected[1])
    assert regime == expected[2]


@pytest.mark.parametrize("q", [1.1, 1.7, 2.0, 2.5, 4.0])
def test_cramer_monotone(q):
    r = cramer_comparison(q)
    assert r.witten_exponent_bound - r.cramer_exponent_bound == pytest.approx(q - 2)


def test_cramer_out_of_theory():
    with pytest.raises(OutOfTheoryError):
        cramer_comparison(1.0)


def test_langevin_params():
    p = langevin_lyapunov_params(1, 0, 1, 0.5, 1, eta=1, epsilon=0.1)
    assert (p.a, p.b, p.C) == pytest.approx((0.04, 0.1, 0.5))
    p = langevin_lyapunov_params(1, 0, 10, 0.5, 1, eta=0.1, epsilon=0.01)
    assert (p.a, p.b, p.C) == pytest.approx((0.004, 1.99, 5.0))
    with pytest.raises(ParameterError):
        langevin_lyapunov_params(1, 0, 1, 1.0, 1)


@pytest.mark.parametrize("gamma", [0.01, 0.1, 1, 10, 100])
@pytest.mark.parametrize("cV", [0.1, 1, 5])
def test_langevin_params_feasible(gamma, cV):
    p = langevin_lyapunov_params(cV, 0.3, gamma, 0.5, 2)
    assert p.a > 0 and p.b > 0
    assert p.C == pytest.approx(0.5 * gamma * 2 + p.epsilon * 0.3)


def test_report():
    rep = lyapunov_report(overdamped_quartic(1), LyapunovSpec.exponential(quartic_potential(1), 0.5),
                          {"x": field_from_expression("sqrt(1+x^2)", 1)}, q=4)
    assert rep.confining
    assert rep.verdicts["x"].admissible
    assert rep.regime.regime == "super_gaussian"
    assert rep.constants.C1 > 0
