"""Witten-Lyapunov diagnostics.

For a Lyapunov function W the confinement field is ``Psi = -L W / W``.  With
``W = exp(u)`` this reads ``Psi = -(L u + grad u . S grad u)``, which is how it is
evaluated here so that ``exp(theta V)`` never has to be formed.  Radial growth is
measured by least squares on log-log samples at radii ``2^k`` along a fixed set
of ray directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.stats import qmc

from .errors import InsufficientWindowError, InvalidLyapunovError, OutOfTheoryError, ParameterError
from .model import DiffusionModel, ScalarField, as_points, generator_field, probe_points

Array = np.ndarray

__all__ = [
    "LyapunovSpec",
    "GrowthFit",
    "KappaVerdict",
    "NonlinearConditionReport",
    "RestrictionConstants",
    "LyapunovReport",
    "CramerComparison",
    "LangevinLyapunovParams",
    "witten_potential",
    "witten_closed_form",
    "log_witten_potential",
    "ray_directions",
    "window_radii",
    "fit_growth",
    "check_nonlinear_condition",
    "check_kappa_admissible",
    "restriction_constants",
    "cramer_comparison",
    "langevin_lyapunov_params",
    "lyapunov_report",
]


@dataclass(frozen=True, eq=False)
class LyapunovSpec:
    """Lyapunov pair (W, auxiliary W) given through their logarithms.

    Use :meth:`exponential` for the pair ``W = exp(theta V)``,
    ``aux = exp(epsilon V)``.
    """

    log_W: ScalarField
    log_aux: Optional[ScalarField] = None
    theta: Optional[float] = None
    epsilon: Optional[float] = None
    V: Optional[ScalarField] = None

    @classmethod
    def exponential(cls, V: ScalarField, theta: float, epsilon: Optional[float] = None) -> "LyapunovSpec":
        if not 0.0 < theta < 1.0:
            raise ParameterError("theta must lie in (0, 1)")
        if epsilon is None:
            epsilon = theta / 4.0
        if epsilon <= 0:
            raise ParameterError("epsilon must be positive")
        return cls(theta * V, epsilon * V, theta, epsilon, V)

    @classmethod
    def from_W(cls, W: ScalarField, aux: Optional[ScalarField] = None) -> "LyapunovSpec":
        """Wrap fields given directly; they must be positive."""
        return cls(W.log(), None if aux is None else aux.log())


def log_witten_potential(model: DiffusionModel, log_W: ScalarField) -> ScalarField:
    """``-(L u + grad u . S grad u)`` for ``u = log W``."""
    if not log_W.has_derivatives:
        log_W = log_W.with_fd_derivatives()
    Lu = generator_field(model, log_W)

    def value(X):
        g = log_W.grad(X)
        S = model.diffusion_matrix(X)
        if S.ndim == 2:
            S = np.broadcast_to(S, (X.shape[0],) + S.shape)
        return -(Lu.value(X) + np.einsum("ni,nij,nj->n", g, S, g))

    return ScalarField(model.dim, value, name=f"Psi[{log_W.name}]")


def witten_potential(model: DiffusionModel, spec: LyapunovSpec, *, probe_box: float = 4.0,
                     n_probes: int = 1000) -> ScalarField:
    """Return ``Psi = -L W / W``.

    Raises
    ------
    InvalidLyapunovError
        If ``W < 1`` (equivalently ``log W < 0``) at a probe point.
    """
    X = probe_points(model.dim, n_probes, probe_box)
    u = spec.log_W.value(X)
    if np.any(~np.isfinite(u)) or np.min(u) < -1e-12:
        raise InvalidLyapunovError(
            f"W drops below 1 on probe points (min log W = {np.nanmin(u):.3e})")
    return log_witten_potential(model, spec.log_W)


def witten_closed_form(V: ScalarField, theta: float) -> ScalarField:
    """``theta (1 - theta) |grad V|^2 - theta Laplacian V`` for reversible dynamics."""

    def value(X):
        g = V.grad(X)
        lap = np.trace(V.hess(X), axis1=1, axis2=2)
        return theta * (1.0 - theta) * np.einsum("ni,ni->n", g, g) - theta * lap

    return ScalarField(V.dim, value, name=f"Psi_closed[{theta:g}]")


# -- radial sampling ---------------------------------------------------------

def ray_directions(dim: int, n: int = 64) -> Array:
    """Unit directions: ``+-1`` in 1-d, evenly spaced angles in 2-d, Sobol otherwise."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        a = 2.0 * np.pi * np.arange(n) / n
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    u = qmc.Sobol(d=dim, scramble=True, seed=1).random(n)
    g = stats.norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def window_radii(radius_window: Sequence[float], minimum: int = 1) -> Array:
    """Radii ``2^k`` inside ``[lo, hi]``."""
    lo, hi = float(radius_window[0]), float(radius_window[1])
    if not 0 < lo < hi:
        raise ParameterError("radius window must satisfy 0 < lo < hi")
    ks = np.arange(np.ceil(np.log2(lo) - 1e-12), np.floor(np.log2(hi) + 1e-12) + 1)
    radii = 2.0 ** ks
    if radii.size < minimum:
        raise InsufficientWindowError(
            f"window [{lo:g}, {hi:g}] contains {radii.size} radii of the form 2^k, need {minimum}")
    return radii


def _radial_samples(fld: ScalarField, radii: Array, dirs: Array) -> Array:
    pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, dirs.shape[1])
    return fld.value(pts).reshape(radii.size, dirs.shape[0])


@dataclass(frozen=True)
class GrowthFit:
    """Least-squares slope of ``log field`` against ``log r``.

    When the envelope increases across the window the slope is fitted to the
    increments ``env(2r) - env(r)``, which share the leading exponent.
    """

    exponent: float
    stderr: float
    radii: tuple
    values: tuple
    positive: bool

    @property
    def interval(self) -> tuple[float, float]:
        return (self.exponent - 2 * self.stderr, self.exponent + 2 * self.stderr)


def fit_growth(fld: ScalarField, radius_window: Sequence[float], *, reduce: str = "min",
               n_rays: int = 64, minimum: int = 4) -> GrowthFit:
    """Fit the radial growth exponent of ``fld``.

    ``reduce`` chooses how the ray samples at a radius are combined (``min`` for
    lower envelopes such as Psi, ``max`` for observables).
    """
    radii = window_radii(radius_window, minimum)
    dirs = ray_directions(fld.dim, n_rays)
    samples = _radial_samples(fld, radii, dirs)
    env = samples.min(axis=1) if reduce == "min" else samples.max(axis=1)
    if np.any(~np.isfinite(env)) or np.any(env <= 0):
        return GrowthFit(float("nan"), float("inf"), tuple(radii), tuple(env), False)
    # Successive differences cancel additive lower-order terms (the constant
    # in Psi = |x|^2/4 - 1/2 otherwise biases the slope upwards).
    inc = np.diff(env)
    if np.all(inc > 0):
        res = stats.linregress(np.log(radii[:-1]), np.log(inc))
    else:
        res = stats.linregress(np.log(radii), np.log(env))
    se = float(res.stderr) if np.isfinite(res.stderr) else 0.0
    return GrowthFit(float(res.slope), se, tuple(radii), tuple(env), True)


# -- nonlinear criterion ---------------------------------------------------------

@dataclass(frozen=True)
class NonlinearConditionReport:
    passed: bool
    theta: tuple
    ratio_lower: tuple
    ratio_upper: tuple
    ratio_outer: tuple
    V_grows: bool
    gradient_grows: bool
    reason: str


def _sigma_grad_sq(model: DiffusionModel, V: ScalarField, X: Array) -> Array:
    g = V.grad(X)
    S = model.diffusion_matrix(X)
    if S.ndim == 2:
        return 2.0 * np.einsum("ni,ij,nj->n", g, S, g)
    return 2.0 * np.einsum("ni,nij,nj->n", g, S, g)


def check_nonlinear_condition(model: DiffusionModel, V: ScalarField, theta_grid: Sequence[float],
                              radius_window: Sequence[float] = (4.0, 16.0), *,
                              n_rays: int = 64) -> NonlinearConditionReport:
    """Check that ``(-L V - theta/2 |sigma^T grad V|^2) / |sigma^T grad V|^2`` stays
    between positive constants on the radius window, and that V and
    ``|sigma^T grad V|`` grow along every ray.

    Failure is reported, not raised.
    """
    if not V.has_derivatives:
        V = V.with_fd_derivatives()
    radii = window_radii(radius_window, 2)
    dirs = ray_directions(model.dim, n_rays)
    pts = (radii[:, None, None] * dirs[None]).reshape(-1, model.dim)
    LV = generator_field(model, V).value(pts)
    G = _sigma_grad_sq(model, V, pts)
    Vv = V.value(pts).reshape(radii.size, -1)
    Gv = G.reshape(radii.size, -1)
    V_grows = bool(np.all(np.diff(Vv.min(axis=1)) > 0))
    grad_grows = bool(np.all(np.diff(np.sqrt(Gv).min(axis=1)) > 0))
    lows, highs, outer = [], [], []
    ok = V_grows and grad_grows
    reason = "" if ok else "V or |sigma^T grad V| does not grow on the window"
    for th in theta_grid:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = ((-LV - 0.5 * th * G) / G).reshape(radii.size, -1)
        finite = np.all(np.isfinite(ratio))
        lo = float(np.min(ratio)) if finite else float("nan")
        hi = float(np.max(ratio)) if finite else float("nan")
        lows.append(lo)
        highs.append(hi)
        outer.append(float(np.mean(ratio[-1])) if finite else float("nan"))
        if not finite or lo <= 0:
            ok = False
            reason = reason or f"ratio not bounded below by a positive constant at theta={th:g}"
    return NonlinearConditionReport(ok, tuple(float(t) for t in theta_grid), tuple(lows),
                                    tuple(highs), tuple(outer), V_grows, grad_grows, reason or "ok")


# -- observables -------------------------------------------------------------

@dataclass(frozen=True)
class KappaVerdict:
    admissible: bool
    heavy_tail: bool
    bounded: bool
    kappa_fit: GrowthFit
    psi_fit: GrowthFit
    margin: float
    generator_bound: Optional[float]
    generator_bounded: Optional[bool]
    log_gradient_bound: Optional[float]
    log_gradient_bounded: Optional[bool]
    reason: str


def check_kappa_admissible(psi: ScalarField, kappa: ScalarField,
                           radius_window: Sequence[float] = (4.0, 64.0), *,
                           model: Optional[DiffusionModel] = None, n_rays: int = 64) -> KappaVerdict:
    """Decide whether the observable weight ``kappa`` is dominated by ``psi``.

    Admissible when ``kappa`` is bounded, or when its growth exponent is below
    that of ``psi`` by at least twice the combined fit standard error.  With a
    model, ``L kappa / kappa`` and ``|sigma^T grad log kappa|`` are also sampled
    and must not grow across the window.

    Raises
    ------
    InsufficientWindowError
        If the window holds fewer than four radii ``2^k``.
    """
    radii = window_radii(radius_window, 4)
    dirs = ray_directions(psi.dim, n_rays)
    ksamp = _radial_samples(kappa, radii, dirs)
    if np.any(ksamp < 1.0 - 1e-12):
        raise ParameterError(f"kappa must be >= 1 on the window (min {ksamp.min():.3e})")
    kfit = fit_growth(kappa, radius_window, reduce="max", n_rays=n_rays)
    pfit = fit_growth(psi, radius_window, reduce="min", n_rays=n_rays)
    kmax = ksamp.max(axis=1)
    bounded = bool(kmax[-1] <= kmax[0] * (1 + 1e-9) or (kfit.positive and abs(kfit.exponent) <= 1e-6))
    heavy = bool(pfit.positive and pfit.exponent < 1.0)
    if not pfit.positive:
        margin = float("nan")
        admissible = bounded
        reason = "Psi is not positive on the window" if not bounded else "kappa bounded"
    else:
        margin = pfit.exponent - kfit.exponent
        needed = 2.0 * (pfit.stderr + kfit.stderr)
        admissible = bounded or margin > max(needed, 1e-9)
        reason = "kappa bounded" if bounded else (
            f"growth margin {margin:.3g} vs required {needed:.3g}")

    gen_bound = gen_ok = lg_bound = lg_ok = None
    if model is not None:
        kd = kappa if kappa.has_derivatives else kappa.with_fd_derivatives()
        log_k = kd.log()
        pts = (radii[:, None, None] * dirs[None]).reshape(-1, psi.dim)
        lk = (generator_field(model, kd).value(pts) / kd.value(pts)).reshape(radii.size, -1).max(axis=1)
        lg = np.sqrt(_sigma_grad_sq(model, log_k, pts)).reshape(radii.size, -1).max(axis=1)
        gen_bound = float(lk.max())
        lg_bound = float(lg.max())
        gen_ok = bool(lk[-1] <= max(lk[0], 0.0) + 1e-9 * (1 + abs(lk[0])))
        lg_ok = bool(lg[-1] <= lg[0] + 1e-9 * (1 + abs(lg[0])))
        if admissible and not (gen_ok and lg_ok):
            admissible = False
            reason = "L kappa / kappa or |sigma^T grad log kappa| grows on the window"
    return KappaVerdict(admissible, heavy, bounded, kfit, pfit, margin, gen_bound, gen_ok,
                        lg_bound, lg_ok, reason)


# -- restriction constants ---------------------------------------------------

@dataclass(frozen=True)
class RestrictionConstants:
    """Witnessed constants for ``aux^2 <= C1 W``, ``Psi ~ -L aux / aux`` and
    ``-2 L aux / aux <= Psi + C2`` on the probe set."""

    C1: float
    C2: float
    ratio_lower: float
    ratio_upper: float
    n_probes: int


def restriction_constants(model: DiffusionModel, spec: LyapunovSpec, *, probe_box: float = 8.0,
                          n_probes: int = 1000, comparison_radius: float = 2.0) -> RestrictionConstants:
    if spec.log_aux is None:
        raise ParameterError("the auxiliary Lyapunov function is required")
    X = probe_points(model.dim, n_probes, probe_box)
    if np.min(spec.log_aux.value(X)) < -1e-12:
        raise InvalidLyapunovError("auxiliary function drops below 1 on probe points")
    psi = log_witten_potential(model, spec.log_W).value(X)
    psi_aux = log_witten_potential(model, spec.log_aux).value(X)
    C1 = float(np.exp(np.max(2.0 * spec.log_aux.value(X) - spec.log_W.value(X))))
    C2 = float(np.max(2.0 * psi_aux - psi))
    far = np.linalg.norm(X, axis=1) >= comparison_radius
    with np.errstate(divide="ignore", invalid="ignore"):
        r = psi[far] / psi_aux[far]
    r = r[np.isfinite(r)]
    lo = float(r.min()) if r.size else float("nan")
    hi = float(r.max()) if r.size else float("nan")
    return RestrictionConstants(C1, C2, lo, hi, int(X.shape[0]))


# -- Cramer comparison -----------------------------------------------------------

@dataclass(frozen=True)
class CramerComparison:
    cramer_exponent_bound: float
    witten_exponent_bound: float
    regime: str

    def __iter__(self):
        return iter((self.cramer_exponent_bound, self.witten_exponent_bound, self.regime))


def cramer_comparison(q: float) -> CramerComparison:
    """Compare observable growth allowed by Cramer's condition (``|x|^q``) with the
    Witten-Lyapunov bound (``|x|^{2(q-1)}``) for ``V ~ |x|^q``.

    Examples
    --------
    >>> tuple(cramer_comparison(3.0))
    (3.0, 4.0, 'super_gaussian')
    """
    q = float(q)
    if not q > 1.0:
        raise OutOfTheoryError("the comparison needs q > 1")
    w = 2.0 * (q - 1.0)
    if q > 2.0:
        regime = "super_gaussian"
    elif q == 2.0:
        regime = "gaussian"
    else:
        regime = "sub_gaussian"
    return CramerComparison(q, w, regime)


# -- Langevin constants ----------------------------------------------------------

@dataclass(frozen=True)
class LangevinLyapunovParams:
    """Constants of the bound ``-L W / W >= a|q|^2 + b|p|^2 - C`` for
    ``W = exp(theta H + epsilon q.p)``, given ``q . grad V >= c_V |q|^2 - C_V``."""

    c_V: float
    C_V: float
    gamma: float
    theta: float
    d: int
    eta: float
    epsilon: float
    a: float
    b: float
    C: float


def _langevin_abc(c_V, C_V, gamma, theta, d, eta, eps):
    a = eps * (c_V - eta * gamma / 2.0) - gamma * eps ** 2
    b = theta * (1.0 - theta) * gamma - eps - gamma * eps / (2.0 * eta)
    C = theta * gamma * d + eps * C_V
    return a, b, C


def langevin_lyapunov_params(c_V: float, C_V: float, gamma: float, theta: float, d: int = 1, *,
                             eta: Optional[float] = None,
                             epsilon: Optional[float] = None) -> LangevinLyapunovParams:
    """Choose ``eta`` and ``epsilon`` and return the resulting constants.

    By default ``eta = c_V / gamma`` and ``epsilon`` is the largest power of two
    making both ``a`` and ``b`` positive.  Explicit values are validated.

    Examples
    --------
    >>> p = langevin_lyapunov_params(1, 0, 1, 0.5, 1, eta=1.0, epsilon=0.1)
    >>> round(p.a, 12), round(p.b, 12), p.C
    (0.04, 0.1, 0.5)
    """
    if not 0.0 < theta < 1.0:
        raise ParameterError("theta must lie in (0, 1)")
    if c_V <= 0 or gamma <= 0:
        raise ParameterError("c_V and gamma must be positive")
    if eta is None:
        eta = c_V / gamma
    if not 0.0 < eta < 2.0 * c_V / gamma:
        raise ParameterError(f"eta must lie in (0, 2 c_V / gamma) = (0, {2 * c_V / gamma:g})")
    if epsilon is None:
        for k in range(0, 200):
            eps = 2.0 ** (-k)
            a, b, C = _langevin_abc(c_V, C_V, gamma, theta, d, eta, eps)
            if a > 0 and b > 0:
                epsilon = eps
                break
        else:  # pragma: no cover - excluded by the explicit construction
            raise ParameterError("no admissible epsilon found")
    a, b, C = _langevin_abc(c_V, C_V, gamma, theta, d, eta, epsilon)
    if not (a > 0 and b > 0):
        raise ParameterError(f"epsilon={epsilon:g} gives a={a:.3g}, b={b:.3g}; both must be positive")
    return LangevinLyapunovParams(float(c_V), float(C_V), float(gamma), float(theta), int(d),
                                  float(eta), float(epsilon), float(a), float(b), float(C))


# -- full report -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LyapunovReport:
    psi: ScalarField
    psi_fit: GrowthFit
    confining: bool
    constants: Optional[RestrictionConstants]
    verdicts: dict = field(default_factory=dict)
    regime: Optional[CramerComparison] = None


def lyapunov_report(model: DiffusionModel, spec: LyapunovSpec, kappas: Optional[dict] = None,
                    radius_window: Sequence[float] = (4.0, 64.0), *,
                    q: Optional[float] = None) -> LyapunovReport:
    """Assemble Psi, its growth fit, restriction constants and kappa verdicts."""
    psi = witten_potential(model, spec)
    fit = fit_growth(psi, radius_window, reduce="min")
    env = np.asarray(fit.values)
    confining = bool(fit.positive and np.all(np.diff(env) > 0))
    consts = restriction_constants(model, spec) if spec.log_aux is not None else None
    verdicts = {}
    for name, kappa in (kappas or {}).items():
        verdicts[name] = check_kappa_admissible(psi, kappa, radius_window, model=model)
    regime = cramer_comparison(q) if q is not None else None
    return LyapunovReport(psi, fit, confining, consts, verdicts, regime)


def evaluate(fld: ScalarField, x) -> Array:
    """Convenience: evaluate a field on points of any accepted shape."""
    X, _ = as_points(x, fld.dim)
    return fld.value(X)
