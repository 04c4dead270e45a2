"""Level-1 rate functions, the Donsker-Varadhan functional and variational bounds."""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline

from .errors import ConvexityError, DomainError, EmptyFamilyError, ParameterError
from .grid import Mesh, SparseGenerator, sample
from .scgf import ScgfCurve, convexity_violations, default_threads

Array = np.ndarray

__all__ = [
    "RateCurve",
    "legendre_transform",
    "double_conjugate_check",
    "DVValue",
    "donsker_varadhan_value",
    "VariationalBound",
    "variational_scgf_bound",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _curve_arrays(curve) -> tuple[Array, Array, Array]:
    if isinstance(curve, ScgfCurve):
        return curve.thetas, curve.values, curve.tolerance
    t, v = curve
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    order = np.argsort(t)
    return t[order], v[order], np.full(t.size, 1e-10)


class _Interpolant:
    """Smooth interpolant of sampled ``lambda`` (cubic spline, linear below 4 points)."""

    def __init__(self, t: Array, v: Array):
        self.t, self.v = t, v
        self.spline = CubicSpline(t, v) if t.size >= 4 else None

    def __call__(self, x):
        if self.spline is not None:
            return self.spline(x)
        return np.interp(x, self.t, self.v)

    def slope(self, x) -> float:
        if self.spline is not None:
            return float(self.spline(x, 1))
        k = int(np.clip(np.searchsorted(self.t, x) - 1, 0, self.t.size - 2))
        return float((self.v[k + 1] - self.v[k]) / (self.t[k + 1] - self.t[k]))


@dataclass(eq=False)
class RateCurve:
    """Sampled ``a -> I_f(a)``.

    Entries outside the slope range of the SCGF are ``+inf`` and flagged in
    ``is_infinite``; ``slope_range`` holds the boundary slopes achieved.
    """

    a: Array
    values: Array
    is_infinite: Array
    maximizers: Array
    slope_range: tuple
    a_star: float
    thetas: Array
    lambdas: Array
    certificate: dict = field(default_factory=dict)

    def rows(self):
        for a, v, inf in zip(self.a, self.values, self.is_infinite):
            yield float(a), float(v), bool(inf)

    def finite(self) -> tuple[Array, Array]:
        m = ~self.is_infinite
        return self.a[m], self.values[m]


def _golden_max(fun, lo: Array, hi: Array, tol: float = 1e-13, max_iter: int = 200) -> tuple[Array, Array]:
    """Vectorized golden-section maximization of ``fun`` on ``[lo, hi]``."""
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if np.all(hi - lo <= tol * (1.0 + np.abs(lo) + np.abs(hi))):
            break
        left = fc > fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        nc = hi - _GOLDEN * (hi - lo)
        nd = lo + _GOLDEN * (hi - lo)
        c_new = np.where(left, nc, d)
        d_new = np.where(left, c, nd)
        fc_new = np.where(left, fun(nc), fd)
        fd_new = np.where(left, fc, fun(nd))
        c, d, fc, fd = c_new, d_new, fc_new, fd_new
    x = 0.5 * (lo + hi)
    return x, fun(x)


def legendre_transform(curve: Union[ScgfCurve, tuple], a_grid: Sequence[float]) -> RateCurve:
    """``I(a) = sup_theta {theta a - lambda(theta)}`` on ``a_grid``.

    The supremum is located on the samples, then refined by golden-section
    search on the smooth interpolant over the two neighbouring intervals.  The
    result is never below the sampled maximum, so Fenchel-Young holds exactly
    on the samples.

    Raises
    ------
    ConvexityError
        When the sampled curve violates convexity beyond its tolerance.
    """
    t, v, tol = _curve_arrays(curve)
    if t.size < 2:
        raise ParameterError("at least two theta samples are needed")
    bad = convexity_violations(t, v, tol)
    if bad:
        raise ConvexityError(f"SCGF samples are not convex at theta triple {bad[0]}", triple=bad[0])
    a = np.asarray(a_grid, dtype=float)
    interp = _Interpolant(t, v)
    s_lo, s_hi = interp.slope(t[0]), interp.slope(t[-1])
    slack = 1e-12 * (1.0 + max(abs(s_lo), abs(s_hi)))
    infinite = (a < s_lo - slack) | (a > s_hi + slack)

    scores = a[:, None] * t[None, :] - v[None, :]
    k = np.argmax(scores, axis=1)
    best = scores[np.arange(a.size), k]
    theta_star = t[k].copy()
    lo = t[np.maximum(k - 1, 0)]
    hi = t[np.minimum(k + 1, t.size - 1)]
    x, fx = _golden_max(lambda th: a * th - interp(th), lo, hi)
    better = fx > best
    values = np.where(better, fx, best)
    theta_star = np.where(better, x, theta_star)
    values = np.where(infinite, np.inf, values)
    theta_star = np.where(infinite, np.nan, theta_star)

    a_star = interp.slope(0.0) if t[0] <= 0.0 <= t[-1] else float("nan")
    digest = hashlib.sha256(np.ascontiguousarray(np.stack([t, v])).tobytes()).hexdigest()
    fy = a[~infinite, None] * t[None, :] - v[None, :]
    fy_margin = float(np.min(values[~infinite, None] - fy)) if fy.size else 0.0
    cert = {"curve_sha256": digest, "fenchel_young_margin": fy_margin, "n_thetas": int(t.size)}
    return RateCurve(a, values, infinite, theta_star, (s_lo, s_hi), a_star, t.copy(), v.copy(), cert)


def double_conjugate_check(rate: RateCurve, thetas: Optional[Sequence[float]] = None) -> float:
    """``max |lambda**(theta) - lambda(theta)|`` with ``lambda**`` from the finite samples of I.

    Without ``thetas`` the stored samples are used, restricted to those whose
    slope lies inside the finite part of the a-grid (elsewhere the sampled I
    cannot reproduce lambda).
    """
    interp = _Interpolant(rate.thetas, rate.lambdas)
    a, I = rate.finite()
    if a.size == 0:
        return float("inf")
    if thetas is None:
        slopes = np.array([interp.slope(t) for t in rate.thetas])
        th = rate.thetas[(slopes >= a.min()) & (slopes <= a.max())]
        if th.size == 0:
            return float("inf")
    else:
        th = np.asarray(thetas, dtype=float)
    lam2 = np.max(th[:, None] * a[None, :] - I[None, :], axis=1)
    return float(np.max(np.abs(lam2 - interp(th))))


@dataclass(frozen=True)
class DVValue:
    """Donsker-Varadhan functional with the excluded boundary mass."""

    value: float
    excluded_mass: float
    n_rows: int

    def __float__(self) -> float:
        return self.value


def donsker_varadhan_value(L: Union[SparseGenerator, sp.spmatrix], u, nu, mesh: Optional[Mesh] = None) -> DVValue:
    """``-sum_x nu(x) (L u)(x) / u(x)`` over interior nodes.

    Raises
    ------
    DomainError
        When ``u`` is not strictly positive.
    """
    if isinstance(L, SparseGenerator):
        mesh = mesh or L.mesh
        L = L.matrix
    if mesh is not None:
        u = sample(mesh, u)
    u = np.asarray(u, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if u.shape != (L.shape[0],) or nu.shape != u.shape:
        raise ParameterError("u and nu must be sampled on the generator's mesh")
    if not np.all(np.isfinite(u)) or np.any(u <= 0):
        raise DomainError("u must be strictly positive on the mesh")
    if np.any(nu < 0):
        raise ParameterError("nu must be nonnegative")
    nu = nu / nu.sum()
    interior = mesh.interior_mask() if mesh is not None else np.ones(u.size, dtype=bool)
    ratio = (L @ u) / u
    value = -float(np.sum(nu[interior] * ratio[interior]))
    return DVValue(value, float(nu[~interior].sum()), int(interior.sum()))


@dataclass(frozen=True, eq=False)
class VariationalBound:
    value: float
    index: int
    values: Array
    rates: Array
    means: Array


def variational_scgf_bound(ctx, f, family: Sequence, *, threads: Optional[int] = None) -> VariationalBound:
    """``max_nu {nu(f) - I(nu)}`` over a family of perturbations.

    ``ctx`` is a ``DecompositionContext``; members are log-densities ``v``
    (arrays, callables or fields) or ``Perturbation`` objects.  The rate is
    ``I_S + I_A`` from the decomposition.
    """
    from .decompose import Perturbation, decompose

    family = list(family)
    if not family:
        raise EmptyFamilyError("the measure family is empty")
    fv = sample(ctx.mesh, f)

    def one(member):
        pert = member if isinstance(member, Perturbation) else ctx.perturbation(member)
        res = decompose(ctx, pert)
        m = float(np.sum(pert.nu * fv))
        return m, res.total

    n = threads or default_threads()
    if n > 1 and len(family) > 1:
        with ThreadPoolExecutor(n) as ex:
            out = list(ex.map(one, family))
    else:
        out = [one(m) for m in family]
    means = np.array([o[0] for o in out])
    rates = np.array([o[1] for o in out])
    vals = means - rates
    k = int(np.argmax(vals))
    return VariationalBound(float(vals[k]), k, vals, rates, means)
