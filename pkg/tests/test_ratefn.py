import numpy as np
import pytest

from devrate.decompose import decompose
from devrate.errors import ConvexityError, DomainError, EmptyFamilyError, ParameterError
from devrate.ratefn import (
    double_conjugate_check,
    donsker_varadhan_value,
    legendre_transform,
    variational_scgf_bound,
)
from devrate.spectral import principal_eigenpair


def quadratic(thetas, c=1.0):
    t = np.asarray(thetas, dtype=float)
    return t, c * t ** 2


def test_quadratic_transform():
    rate = legendre_transform(quadratic(np.linspace(-1.5, 1.5, 61)), [-2, -1, 0, 1, 2])
    assert rate.values[4] == pytest.approx(1.0, abs=1e-6)
    assert rate.values[2] == pytest.approx(0.0, abs=1e-12)
    assert rate.values[1] == pytest.approx(0.25, abs=1e-6)
    assert rate.a_star == pytest.approx(0.0, abs=1e-9)
    assert not rate.is_infinite.any()
    assert rate.certificate["fenchel_young_margin"] >= 0.0


def test_stiffer_ou_transform():
    # alpha = 2 gives lambda = theta^2 / 4 and I(a) = a^2
    rate = legendre_transform(quadratic(np.linspace(-2.5, 2.5, 51), 0.25), [1.0])
    assert rate.values[0] == pytest.approx(1.0, abs=1e-6)


def test_flat_curve_infinite_sentinel():
    rate = legendre_transform((np.linspace(-1, 1, 11), np.zeros(11)), [-0.5, 0.0, 0.5])
    assert list(rate.is_infinite) == [True, False, True]
    assert rate.values[1] == 0.0
    assert np.isinf(rate.values[0]) and np.isinf(rate.values[2])
    assert rate.slope_range == (0.0, 0.0)
    assert double_conjugate_check(rate) == 0.0


def test_sentinel_outside_slope_range():
    rate = legendre_transform(quadratic(np.linspace(-1, 1, 41)), [-3, 1.5, 3])
    assert list(rate.is_infinite) == [True, False, True]
    assert rate.slope_range[1] == pytest.approx(2.0, abs=1e-6)


def test_double_conjugate_ou(ou_gen):
    from devrate.expr import field_from_expression
    from devrate.scgf import scgf_spectral

    curve = scgf_spectral(ou_gen, field_from_expression("x", 1, ["x"]), np.linspace(-1, 1, 21))
    rate = legendre_transform(curve, np.arange(-2, 2.0001, 0.01))
    assert double_conjugate_check(rate, np.linspace(-1, 1, 21)) <= 5e-3
    assert rate.a_star == pytest.approx(0.0, abs=1e-3)


@pytest.mark.parametrize("c", [-1.0, 0.5, 2.0])
def test_double_conjugate_shift_invariance(c):
    t, v = quadratic(np.linspace(-1, 1, 41))
    a = np.arange(-2, 2.0001, 0.01)
    base = double_conjugate_check(legendre_transform((t, v), a))
    shifted = double_conjugate_check(legendre_transform((t, v + c * t), a + c))
    assert shifted == pytest.approx(base, abs=1e-9)


def test_fenchel_young_on_samples():
    t, v = quadratic(np.linspace(-1, 1, 9))
    t, v = t, v + 0.3 * np.sin(t)
    a = np.linspace(-1.5, 1.5, 31)
    rate = legendre_transform((t, v), a)
    fin = ~rate.is_infinite
    assert np.all(rate.values[fin, None] >= a[fin, None] * t[None, :] - v[None, :] - 1e-15)


def test_convexity_error():
    with pytest.raises(ConvexityError) as info:
        legendre_transform(([-1, 0, 1], [0.0, 1.0, 0.0]), [0.0])
    assert info.value.triple is not None
    with pytest.raises(ParameterError):
        legendre_transform(([0.0], [0.0]), [0.0])


def test_dv_constant_u(ou_gen, ou_ctx):
    nu = ou_ctx.perturbation(lambda X: np.sin(X[:, 0])).nu
    out = donsker_varadhan_value(ou_gen, 3.0, nu)
    assert abs(out.value) <= 1e-12
    assert out.excluded_mass < 1e-10


def test_dv_principal_eigenvector(ou_gen, ou_ctx):
    x = ou_gen.mesh.points()[:, 0]
    f = 0.5 * x
    sol = principal_eigenpair(ou_gen, f)
    nu = ou_ctx.perturbation(0.3 * x).nu
    out = donsker_varadhan_value(ou_gen, sol.right, nu)
    expect = float(np.sum(nu * f)) - sol.eigenvalue
    assert out.value == pytest.approx(expect, abs=1e-6)


def test_dv_rejects_nonpositive(ou_gen):
    nu = np.full(ou_gen.size, 1.0 / ou_gen.size)
    u = np.ones(ou_gen.size)
    u[10] = 0.0
    with pytest.raises(DomainError):
        donsker_varadhan_value(ou_gen, u, nu)


def test_dv_below_rate_for_random_bumps(ou_gen, ou_ctx):
    x = ou_gen.mesh.points()[:, 0]
    v = 0.5 * x - 0.125
    pert = ou_ctx.perturbation(v)
    I = decompose(ou_ctx, pert).total
    rng = np.random.default_rng(2024)
    best = donsker_varadhan_value(ou_gen, np.exp(v / 2), pert.nu).value
    assert best == pytest.approx(I, abs=1e-4)
    for _ in range(50):
        c, w, a = rng.uniform(-3, 3), rng.uniform(0.3, 2), rng.normal(0, 0.5)
        u = np.exp(v / 2 + a * np.exp(-((x - c) / w) ** 2))
        assert donsker_varadhan_value(ou_gen, u, pert.nu).value <= I + 1e-6


def test_contraction_inequality(ou_gen, ou_ctx):
    from devrate.expr import field_from_expression
    from devrate.scgf import scgf_spectral

    curve = scgf_spectral(ou_gen, field_from_expression("x", 1, ["x"]), np.linspace(-3, 3, 61))
    x = ou_gen.mesh.points()[:, 0]
    for v in (0.8 * x - 0.32, 0.4 * x ** 2, np.sin(x)):
        pert = ou_ctx.perturbation(v)
        a = float(np.sum(pert.nu * x))
        Ia = legendre_transform(curve, [a]).values[0]
        assert Ia <= decompose(ou_ctx, pert).total + 1e-6


def test_variational_family(ou_ctx):
    family = [lambda X, m=m: m * X[:, 0] - m * m / 2 for m in np.round(np.arange(-3, 3.0001, 0.1), 10)]
    res = variational_scgf_bound(ou_ctx, lambda X: X[:, 0], family, threads=1)
    assert res.value == pytest.approx(1.0, abs=1e-3)
    assert np.round(np.arange(-3, 3.0001, 0.1), 10)[res.index] == pytest.approx(2.0)
    assert res.value <= 1.0 + 1e-3
    assert np.all(res.values <= 1.0 + 1e-3)


def test_variational_family_of_mu(ou_ctx):
    x = ou_ctx.mesh.points()[:, 0]
    f = np.cos(x)
    res = variational_scgf_bound(ou_ctx, f, [np.zeros_like(x)], threads=1)
    assert res.value == pytest.approx(float(np.sum(ou_ctx.mu * f)), abs=1e-10)


def test_empty_family(ou_ctx):
    with pytest.raises(EmptyFamilyError):
        variational_scgf_bound(ou_ctx, lambda X: X[:, 0], [])
