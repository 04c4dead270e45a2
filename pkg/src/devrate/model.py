"""Diffusion models, scalar fields and the built-in catalog.

A :class:`DiffusionModel` describes the SDE ``dX = b(X) dt + sigma(X) dB`` through
vectorized evaluators acting on point arrays of shape ``(n, d)``.  Its generator is
``L = b . grad + S : Hess`` with ``S = sigma sigma^T / 2``.

:class:`ScalarField` carries a value evaluator together with optional analytic
gradient and Hessian evaluators.  Fields compose under ``+``, ``-``, ``*``,
:meth:`ScalarField.exp` and :meth:`ScalarField.log`, propagating derivatives
exactly, so that generator applications used as test oracles stay exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from .errors import (
    DerivativeUnavailableError,
    InvalidNonequilibriumForceError,
    ModelError,
    ParameterError,
)

Array = np.ndarray

__all__ = [
    "ScalarField",
    "VectorField",
    "Structure",
    "DiffusionModel",
    "apply_generator",
    "carre_du_champ",
    "generator_field",
    "make_nonreversible_overdamped",
    "overdamped",
    "ornstein_uhlenbeck",
    "overdamped_quartic",
    "power_law_potential",
    "quadratic_potential",
    "rotational_force",
    "nonreversible_rotational",
    "langevin",
    "kinetic_energy_lift",
    "probe_points",
    "BUILTIN_MODELS",
    "builtin_model",
]


def as_points(x, dim: int) -> tuple[Array, bool]:
    """Return ``x`` as an ``(n, dim)`` float array and whether it was a single point."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if dim != 1:
            raise ParameterError(f"scalar point given for a {dim}-dimensional field")
        return arr.reshape(1, 1), True
    if arr.ndim == 1:
        if dim == 1 and arr.shape[0] != 1:
            return arr.reshape(-1, 1), False
        if arr.shape[0] != dim:
            raise ParameterError(f"point has {arr.shape[0]} coordinates, expected {dim}")
        return arr.reshape(1, dim), True
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ParameterError(f"points must have shape (n, {dim}), got {arr.shape}")
    return arr, False


def _fd_step(X: Array) -> Array:
    return 1e-4 * (1.0 + np.abs(X))


def fd_gradient(value: Callable[[Array], Array], X: Array) -> Array:
    """Central finite-difference gradient with step ``1e-4 * (1 + |x_i|)``."""
    n, d = X.shape
    out = np.empty((n, d))
    steps = _fd_step(X)
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        hi = steps[:, i:i + 1]
        out[:, i] = (value(X + hi * e) - value(X - hi * e)) / (2.0 * hi[:, 0])
    return out


def fd_hessian(gradient: Callable[[Array], Array], X: Array) -> Array:
    """Symmetrized central finite differences of a gradient evaluator."""
    n, d = X.shape
    out = np.empty((n, d, d))
    steps = _fd_step(X)
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        hi = steps[:, i:i + 1]
        out[:, :, i] = (gradient(X + hi * e) - gradient(X - hi * e)) / (2.0 * hi)
    return 0.5 * (out + np.swapaxes(out, 1, 2))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real-valued field on R^d with optional analytic derivatives.

    Parameters
    ----------
    dim : int
        Dimension of the state space.
    value : callable
        Maps an ``(n, dim)`` array to an ``(n,)`` array.
    grad, hess : callable, optional
        Map ``(n, dim)`` to ``(n, dim)`` and ``(n, dim, dim)`` respectively.
    name : str
        Label used in reports.
    growth : str, optional
        Free-form growth class, e.g. ``"quadratic"``.
    """

    dim: int
    value: Callable[[Array], Array]
    grad: Optional[Callable[[Array], Array]] = None
    hess: Optional[Callable[[Array], Array]] = None
    name: str = "field"
    growth: Optional[str] = None

    def __call__(self, x):
        X, single = as_points(x, self.dim)
        out = np.broadcast_to(np.asarray(self.value(X), dtype=float), (X.shape[0],))
        return float(out[0]) if single else np.array(out)

    @property
    def has_derivatives(self) -> bool:
        return self.grad is not None and self.hess is not None

    def gradient(self, x) -> Array:
        """Analytic gradient; raises if unavailable."""
        if self.grad is None:
            raise DerivativeUnavailableError(f"field '{self.name}' has no gradient evaluator")
        X, single = as_points(x, self.dim)
        g = np.broadcast_to(np.asarray(self.grad(X), dtype=float), X.shape)
        return np.array(g[0]) if single else np.array(g)

    def hessian(self, x) -> Array:
        """Analytic Hessian; raises if unavailable."""
        if self.hess is None:
            raise DerivativeUnavailableError(f"field '{self.name}' has no Hessian evaluator")
        X, single = as_points(x, self.dim)
        H = np.broadcast_to(np.asarray(self.hess(X), dtype=float), X.shape + (self.dim,))
        return np.array(H[0]) if single else np.array(H)

    def with_fd_derivatives(self) -> "ScalarField":
        """Fill missing derivative evaluators by central finite differences."""
        grad = self.grad if self.grad is not None else (lambda X: fd_gradient(self.value, X))
        hess = self.hess if self.hess is not None else (lambda X: fd_hessian(grad, X))
        return replace(self, grad=grad, hess=hess)

    def named(self, name: str) -> "ScalarField":
        return replace(self, name=name)

    # -- constructors -------------------------------------------------------
    @classmethod
    def constant(cls, c: float, dim: int = 1) -> "ScalarField":
        c = float(c)
        return cls(
            dim,
            lambda X: np.full(X.shape[0], c),
            lambda X: np.zeros_like(X),
            lambda X: np.zeros(X.shape + (X.shape[1],)),
            name=repr(c),
            growth="bounded",
        )

    @classmethod
    def coordinate(cls, i: int, dim: int = 1) -> "ScalarField":
        def grad(X):
            g = np.zeros_like(X)
            g[:, i] = 1.0
            return g

        return cls(
            dim,
            lambda X: X[:, i].copy(),
            grad,
            lambda X: np.zeros(X.shape + (X.shape[1],)),
            name=f"x{i}",
            growth="linear",
        )

    @classmethod
    def squared_norm(cls, dim: int = 1) -> "ScalarField":
        """The field |x|^2."""
        return cls(
            dim,
            lambda X: np.einsum("ni,ni->n", X, X),
            lambda X: 2.0 * X,
            lambda X: np.broadcast_to(2.0 * np.eye(X.shape[1]), X.shape + (X.shape[1],)).copy(),
            name="|x|^2",
            growth="quadratic",
        )

    # -- algebra ------------------------------------------------------------
    def _lift(self, other) -> "ScalarField":
        if isinstance(other, ScalarField):
            if other.dim != self.dim:
                raise ParameterError("fields of different dimensions cannot be combined")
            return other
        return ScalarField.constant(float(other), self.dim)

    def __add__(self, other):
        o = self._lift(other)
        a, b = self, o
        grad = hess = None
        if a.grad is not None and b.grad is not None:
            grad = lambda X: a.grad(X) + b.grad(X)  # noqa: E731
        if a.hess is not None and b.hess is not None:
            hess = lambda X: a.hess(X) + b.hess(X)  # noqa: E731
        return ScalarField(self.dim, lambda X: a.value(X) + b.value(X), grad, hess,
                           name=f"({a.name} + {b.name})")

    __radd__ = __add__

    def __neg__(self):
        a = self
        return ScalarField(
            self.dim,
            lambda X: -a.value(X),
            None if a.grad is None else (lambda X: -a.grad(X)),
            None if a.hess is None else (lambda X: -a.hess(X)),
            name=f"-{a.name}",
            growth=a.growth,
        )

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, ScalarField):
            c = float(other)
            a = self
            return ScalarField(
                self.dim,
                lambda X: c * a.value(X),
                None if a.grad is None else (lambda X: c * a.grad(X)),
                None if a.hess is None else (lambda X: c * a.hess(X)),
                name=f"{c!r}*{a.name}",
                growth=a.growth,
            )
        a, b = self, self._lift(other)
        grad = hess = None
        if a.grad is not None and b.grad is not None:
            def grad(X):
                return a.grad(X) * b.value(X)[:, None] + b.grad(X) * a.value(X)[:, None]
        if a.has_derivatives and b.has_derivatives:
            def hess(X):
                fa, fb = a.value(X), b.value(X)
                ga, gb = a.grad(X), b.grad(X)
                cross = np.einsum("ni,nj->nij", ga, gb)
                return (a.hess(X) * fb[:, None, None] + b.hess(X) * fa[:, None, None]
                        + cross + np.swapaxes(cross, 1, 2))
        return ScalarField(self.dim, lambda X: a.value(X) * b.value(X), grad, hess,
                           name=f"{a.name}*{b.name}")

    __rmul__ = __mul__

    def exp(self) -> "ScalarField":
        """Compose with the exponential, keeping exact derivatives."""
        a = self
        grad = hess = None
        if a.grad is not None:
            def grad(X):
                return np.exp(a.value(X))[:, None] * a.grad(X)
        if a.has_derivatives:
            def hess(X):
                g = a.grad(X)
                return np.exp(a.value(X))[:, None, None] * (a.hess(X) + np.einsum("ni,nj->nij", g, g))
        return ScalarField(self.dim, lambda X: np.exp(a.value(X)), grad, hess,
                           name=f"exp({a.name})")

    def log(self) -> "ScalarField":
        """Compose with the logarithm (the field must be positive)."""
        a = self
        grad = hess = None
        if a.grad is not None:
            def grad(X):
                return a.grad(X) / a.value(X)[:, None]
        if a.has_derivatives:
            def hess(X):
                f = a.value(X)[:, None, None]
                g = a.grad(X)
                return a.hess(X) / f - np.einsum("ni,nj->nij", g, g) / f ** 2
        def value(X):
            with np.errstate(invalid="ignore", divide="ignore"):
                return np.log(a.value(X))

        return ScalarField(self.dim, value, grad, hess, name=f"log({a.name})")

    def compose(self, g: Callable[[Array], Array], dg: Callable[[Array], Array],
                d2g: Callable[[Array], Array], name: str) -> "ScalarField":
        """Return ``g(self)`` for a scalar function with known derivatives."""
        a = self
        grad = hess = None
        if a.grad is not None:
            def grad(X):
                return dg(a.value(X))[:, None] * a.grad(X)
        if a.has_derivatives:
            def hess(X):
                u = a.value(X)
                gr = a.grad(X)
                return (dg(u)[:, None, None] * a.hess(X)
                        + d2g(u)[:, None, None] * np.einsum("ni,nj->nij", gr, gr))
        return ScalarField(self.dim, lambda X: g(a.value(X)), grad, hess, name=f"{name}({a.name})")


@dataclass(frozen=True, eq=False)
class VectorField:
    """Vector field on R^d with an optional divergence evaluator."""

    dim: int
    value: Callable[[Array], Array]
    divergence: Optional[Callable[[Array], Array]] = None
    name: str = "F"

    def __call__(self, x):
        X, single = as_points(x, self.dim)
        out = np.broadcast_to(np.asarray(self.value(X), dtype=float), X.shape)
        return np.array(out[0]) if single else np.array(out)

    def div(self, x):
        if self.divergence is None:
            raise DerivativeUnavailableError(f"vector field '{self.name}' has no divergence evaluator")
        X, single = as_points(x, self.dim)
        out = np.broadcast_to(np.asarray(self.divergence(X), dtype=float), (X.shape[0],))
        return float(out[0]) if single else np.array(out)

    @classmethod
    def zero(cls, dim: int) -> "VectorField":
        return cls(dim, lambda X: np.zeros_like(X), lambda X: np.zeros(X.shape[0]), name="0")


@dataclass(frozen=True, eq=False)
class Structure:
    """Structural tag of a model.

    ``kind`` is one of ``reversible_gradient``, ``nonreversible_gradient``,
    ``langevin`` or ``custom``.  ``potential`` is V (on the position space for
    Langevin), ``force`` is the nonreversible F and ``gamma`` the friction.
    """

    kind: str
    potential: Optional[ScalarField] = None
    force: Optional[VectorField] = None
    gamma: Optional[float] = None
    certificate: Optional[float] = None


@dataclass(frozen=True, eq=False)
class DiffusionModel:
    """Diffusion ``dX = b dt + sigma dB`` on R^d.

    Attributes
    ----------
    dim, brownian_dim : int
        State dimension d and noise dimension m.
    drift : callable
        ``(n, d) -> (n, d)``.
    diffusion_factor : callable
        ``(n, d) -> (n, d, m)``.
    structure : Structure
        Structural tag and the data attached to it.
    reference_potential : ScalarField, optional
        A function U with invariant density proportional to ``exp(-U)`` when
        it is known in closed form (gradient models and Langevin).  Used by the
        structure-preserving discretization.
    constant_sigma : ndarray, optional
        Set when sigma does not depend on the state.
    """

    dim: int
    brownian_dim: int
    drift: Callable[[Array], Array]
    diffusion_factor: Callable[[Array], Array]
    structure: Structure = field(default_factory=lambda: Structure("custom"))
    name: str = "custom"
    reference_potential: Optional[ScalarField] = None
    constant_sigma: Optional[Array] = None
    constant_S: Optional[Array] = None
    params: dict = field(default_factory=dict)

    def b(self, x) -> Array:
        X, single = as_points(x, self.dim)
        out = np.broadcast_to(np.asarray(self.drift(X), dtype=float), X.shape)
        return np.array(out[0]) if single else np.array(out)

    def sigma(self, x) -> Array:
        X, single = as_points(x, self.dim)
        if self.constant_sigma is not None:
            out = np.broadcast_to(self.constant_sigma, (X.shape[0],) + self.constant_sigma.shape)
        else:
            out = np.asarray(self.diffusion_factor(X), dtype=float)
        return np.array(out[0]) if single else np.array(out)

    def diffusion_matrix(self, x) -> Array:
        """S = sigma sigma^T / 2, shape ``(d, d)`` or ``(n, d, d)``."""
        if self.constant_S is not None:
            X, single = as_points(x, self.dim)
            if single:
                return self.constant_S.copy()
            return np.broadcast_to(self.constant_S, (X.shape[0], self.dim, self.dim)).copy()
        s = self.sigma(x)
        if s.ndim == 2:
            return 0.5 * s @ s.T
        return 0.5 * np.einsum("nik,njk->nij", s, s)

    def diffusion_divergence(self, x) -> Array:
        """Row-wise divergence of S, zero for constant sigma."""
        X, single = as_points(x, self.dim)
        if self.constant_sigma is not None:
            out = np.zeros_like(X)
        else:
            out = np.zeros_like(X)
            steps = _fd_step(X)
            for j in range(self.dim):
                e = np.zeros(self.dim)
                e[j] = 1.0
                hj = steps[:, j:j + 1]
                dS = (self.diffusion_matrix(X + hj * e) - self.diffusion_matrix(X - hj * e)) / (2 * hj[:, :, None])
                out += dS[:, :, j]
        return out[0] if single else out

    @property
    def kind(self) -> str:
        return self.structure.kind

    @property
    def is_reversible(self) -> bool:
        return self.structure.kind == "reversible_gradient"


def generator_field(model: DiffusionModel, phi: ScalarField) -> ScalarField:
    """Return the field ``L phi`` (value evaluator only)."""
    if not phi.has_derivatives:
        raise DerivativeUnavailableError(
            f"field '{phi.name}' needs gradient and Hessian evaluators to apply the generator")
    if phi.dim != model.dim:
        raise ParameterError("field and model dimensions differ")

    def value(X):
        S = model.diffusion_matrix(X)
        if S.ndim == 2:
            S = np.broadcast_to(S, (X.shape[0],) + S.shape)
        return (np.einsum("ni,ni->n", model.drift(X), phi.grad(X))
                + np.einsum("nij,nij->n", S, phi.hess(X)))

    return ScalarField(model.dim, value, name=f"L[{phi.name}]")


def apply_generator(model: DiffusionModel, phi: ScalarField, x):
    """Evaluate ``b . grad phi + S : Hess phi`` at one point or an array of points.

    Examples
    --------
    >>> apply_generator(ornstein_uhlenbeck(), ScalarField.squared_norm(1), 1.0)
    0.0
    """
    return generator_field(model, phi)(x)


def carre_du_champ(model: DiffusionModel, phi: ScalarField, psi: ScalarField, x):
    """Evaluate ``grad phi . S grad psi``."""
    X, single = as_points(x, model.dim)
    gp = phi.gradient(X)
    gq = psi.gradient(X)
    S = model.diffusion_matrix(X)
    if S.ndim == 2:
        out = np.einsum("ni,ij,nj->n", gp, S, gq)
    else:
        out = np.einsum("ni,nij,nj->n", gp, S, gq)
    return float(out[0]) if single else out


def probe_points(dim: int, n: int = 1000, box: float = 4.0, seed: int = 0) -> Array:
    """Scrambled Sobol points filling ``[-box, box]^dim``."""
    m = int(np.ceil(np.log2(max(n, 2))))
    pts = qmc.Sobol(d=dim, scramble=True, seed=seed).random_base2(m)[:n]
    return (2.0 * pts - 1.0) * box


# -- built-in potentials ---------------------------------------------------

def quadratic_potential(alpha: float = 1.0, dim: int = 1) -> ScalarField:
    """V = alpha |x|^2 / 2."""
    V = 0.5 * alpha * ScalarField.squared_norm(dim)
    return replace(V, name=f"{alpha:g}|x|^2/2", growth="quadratic")


def quartic_potential(dim: int = 1) -> ScalarField:
    """V = |x|^4 / 4."""
    r2 = ScalarField.squared_norm(dim)
    V = 0.25 * (r2 * r2)
    return replace(V, name="|x|^4/4", growth="power 4")


def power_law_potential(q: float, dim: int = 1) -> ScalarField:
    """V = (1 + |x|^2)^(q/2) - 1, smooth and growing like |x|^q."""
    if q <= 0:
        raise ParameterError("power-law exponent must be positive")
    half = q / 2.0
    V = ScalarField.squared_norm(dim).compose(
        lambda u: (1.0 + u) ** half - 1.0,
        lambda u: half * (1.0 + u) ** (half - 1.0),
        lambda u: half * (half - 1.0) * (1.0 + u) ** (half - 2.0),
        name=f"pow{q:g}",
    )
    return replace(V, name=f"(1+|x|^2)^({q:g}/2) - 1", growth=f"power {q:g}")


def overdamped(V: ScalarField, name: Optional[str] = None) -> DiffusionModel:
    """Reversible overdamped dynamics ``dX = -grad V dt + sqrt(2) dB``."""
    if V.grad is None:
        V = V.with_fd_derivatives()
    d = V.dim
    sig = np.sqrt(2.0) * np.eye(d)
    return DiffusionModel(
        dim=d,
        brownian_dim=d,
        drift=lambda X: -V.grad(X),
        diffusion_factor=lambda X: np.broadcast_to(sig, (X.shape[0], d, d)),
        structure=Structure("reversible_gradient", potential=V),
        name=name or f"overdamped[{V.name}]",
        reference_potential=V,
        constant_sigma=sig,
        constant_S=np.eye(d),
    )


def ornstein_uhlenbeck(alpha: float = 1.0, dim: int = 1) -> DiffusionModel:
    """``dX = -alpha X dt + sqrt(2) dB``, invariant law N(0, 1/alpha)."""
    if alpha <= 0:
        raise ParameterError("alpha must be positive")
    m = overdamped(quadratic_potential(alpha, dim), name=f"ou(alpha={alpha:g})")
    return replace(m, params={"alpha": alpha, "dim": dim})


def overdamped_quartic(dim: int = 1) -> DiffusionModel:
    m = overdamped(quartic_potential(dim), name="quartic")
    return replace(m, params={"dim": dim})


def rotational_force(V: ScalarField, A: Optional[Array] = None) -> VectorField:
    """F = A grad V for a constant antisymmetric A; then div(F e^{-V}) = 0."""
    d = V.dim
    if A is None:
        if d != 2:
            raise ParameterError("a default rotation is only defined for d = 2")
        A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    A = np.asarray(A, dtype=float)
    if A.shape != (d, d):
        raise ParameterError("rotation matrix has the wrong shape")

    def div(X):
        return np.einsum("ij,nji->n", A, V.hess(X))

    return VectorField(d, lambda X: V.grad(X) @ A.T, div, name="A grad V")


def make_nonreversible_overdamped(V: ScalarField, F: VectorField, *, box: float = 4.0,
                                  n_probes: int = 1000, tol: float = 1e-8,
                                  name: Optional[str] = None) -> DiffusionModel:
    """Overdamped dynamics ``dX = (-grad V + F) dt + sqrt(2) dB``.

    The force must satisfy ``div(F e^{-V}) = div F - F . grad V = 0`` so that
    ``e^{-V}`` stays invariant.  The identity is probed on quasi-random points in
    ``[-box, box]^d`` and the largest residual is stored as a certificate.

    Raises
    ------
    InvalidNonequilibriumForceError
        If the probed residual exceeds ``tol``.
    """
    if F.divergence is None:
        raise DerivativeUnavailableError("the force needs a divergence evaluator")
    if V.grad is None:
        V = V.with_fd_derivatives()
    d = V.dim
    X = probe_points(d, n_probes, box)
    weight = np.exp(-V.value(X))
    residual = weight * (F.divergence(X) - np.einsum("ni,ni->n", F.value(X), V.grad(X)))
    worst = float(np.max(np.abs(residual)))
    if not np.isfinite(worst) or worst > tol:
        raise InvalidNonequilibriumForceError(
            f"div(F exp(-V)) reaches {worst:.3e} on probe points (tolerance {tol:g})")
    sig = np.sqrt(2.0) * np.eye(d)
    return DiffusionModel(
        dim=d,
        brownian_dim=d,
        drift=lambda X: -V.grad(X) + F.value(X),
        diffusion_factor=lambda X: np.broadcast_to(sig, (X.shape[0], d, d)),
        structure=Structure("nonreversible_gradient", potential=V, force=F, certificate=worst),
        name=name or f"nonreversible[{V.name}, {F.name}]",
        reference_potential=V,
        constant_sigma=sig,
        constant_S=np.eye(d),
    )


def nonreversible_rotational(alpha: float = 1.0, strength: float = 1.0) -> DiffusionModel:
    """2-d Gaussian model with rotational force ``strength * A grad V``."""
    V = quadratic_potential(alpha, 2)
    A = strength * np.array([[0.0, 1.0], [-1.0, 0.0]])
    m = make_nonreversible_overdamped(V, rotational_force(V, A), name=f"rotational(alpha={alpha:g})")
    return replace(m, params={"alpha": alpha, "strength": strength})


def kinetic_energy_lift(V: ScalarField) -> tuple[ScalarField, ScalarField]:
    """Lift a position potential to phase space.

    Returns ``(Vq, H)`` with ``Vq(q, p) = V(q)`` and ``H = Vq + |p|^2 / 2``.
    """
    d = V.dim
    Vd = V if V.has_derivatives else V.with_fd_derivatives()

    def grad(X):
        g = np.zeros_like(X)
        g[:, :d] = Vd.grad(X[:, :d])
        return g

    def hess(X):
        H = np.zeros(X.shape + (2 * d,))
        H[:, :d, :d] = Vd.hess(X[:, :d])
        return H

    Vq = ScalarField(2 * d, lambda X: Vd.value(X[:, :d]), grad, hess, name=V.name)

    def kin_hess(X):
        H = np.zeros(X.shape + (2 * d,))
        idx = np.arange(d, 2 * d)
        H[:, idx, idx] = 1.0
        return H

    def kin_grad(X):
        g = np.zeros_like(X)
        g[:, d:] = X[:, d:]
        return g

    K = ScalarField(2 * d, lambda X: 0.5 * np.einsum("ni,ni->n", X[:, d:], X[:, d:]),
                    kin_grad, kin_hess, name="|p|^2/2")
    H = replace(Vq + K, name="H", growth=V.growth)
    return Vq, H


def langevin(V: Optional[ScalarField] = None, gamma: float = 1.0, dim: int = 1) -> DiffusionModel:
    """Langevin dynamics on (q, p).

    ``dq = p dt``, ``dp = (-grad V(q) - gamma p) dt + sqrt(2 gamma) dB``.  The
    invariant law is proportional to ``exp(-H)`` with ``H = V(q) + |p|^2/2``.
    """
    if gamma <= 0:
        raise ParameterError("gamma must be positive")
    if V is None:
        V = quadratic_potential(1.0, dim)
    d = V.dim
    Vd = V if V.has_derivatives else V.with_fd_derivatives()
    _, H = kinetic_energy_lift(Vd)
    sig = np.zeros((2 * d, d))
    sig[d:, :] = np.sqrt(2.0 * gamma) * np.eye(d)
    S = np.zeros((2 * d, 2 * d))
    S[d:, d:] = gamma * np.eye(d)

    def drift(X):
        out = np.empty_like(X)
        out[:, :d] = X[:, d:]
        out[:, d:] = -Vd.grad(X[:, :d]) - gamma * X[:, d:]
        return out

    return DiffusionModel(
        dim=2 * d,
        brownian_dim=d,
        drift=drift,
        diffusion_factor=lambda X: np.broadcast_to(sig, (X.shape[0], 2 * d, d)),
        structure=Structure("langevin", potential=Vd, gamma=float(gamma)),
        name=f"langevin(gamma={gamma:g})",
        reference_potential=H,
        constant_sigma=sig,
        constant_S=S,
        params={"gamma": float(gamma), "dim": d},
    )


def _langevin_builtin(gamma: float = 1.0, dim: int = 1) -> DiffusionModel:
    return langevin(quadratic_potential(1.0, dim), gamma, dim)


def _power_law_builtin(q: float = 4.0, dim: int = 1) -> DiffusionModel:
    m = overdamped(power_law_potential(q, dim), name=f"power(q={q:g})")
    return replace(m, params={"q": q, "dim": dim})


BUILTIN_MODELS: dict[str, Callable[..., DiffusionModel]] = {
    "ou": ornstein_uhlenbeck,
    "quartic": overdamped_quartic,
    "power_law": _power_law_builtin,
    "rotational": nonreversible_rotational,
    "langevin": _langevin_builtin,
}


def builtin_model(name: str, **params) -> DiffusionModel:
    """Instantiate a catalog model by name."""
    try:
        factory = BUILTIN_MODELS[name]
    except KeyError:
        raise ModelError(f"unknown built-in model '{name}'; choose from {sorted(BUILTIN_MODELS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ParameterError(f"bad parameters for model '{name}': {exc}") from None
