"""SCGF curves by the spectral route and by trajectory sampling.

Trajectory methods draw noise from one ``numpy`` PCG64 stream per fixed-size
chunk of replicas, spawned from a single ``SeedSequence``.  Results therefore
depend only on the seed and the parameters, never on how chunks are scheduled
across threads.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .errors import (
    BlowUpError,
    DegeneracyError,
    NumericRangeError,
    OutOfTheoryError,
    ParameterError,
    SolverError,
)
from .grid import Mesh, SparseGenerator, assemble_generator, sample
from .lyapunov import KappaVerdict, LyapunovSpec, check_kappa_admissible, log_witten_potential, \
    langevin_lyapunov_params
from .model import DiffusionModel, ScalarField, kinetic_energy_lift
from .spectral import principal_eigenpair

Array = np.ndarray
Observable = Union[ScalarField, Callable[[Array], Array]]

__all__ = [
    "ScgfCurve",
    "TrajectoryAccumulator",
    "TrajectoryEstimate",
    "scgf_spectral",
    "simulate",
    "scgf_monte_carlo",
    "scgf_cloning",
    "observable_admissibility",
    "convexity_violations",
    "default_threads",
    "CHUNK",
]

CHUNK = 256


def default_threads() -> int:
    """Worker count from ``DEVRATE_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("DEVRATE_THREADS", "1")))
    except ValueError:
        return 1


def _values(f: Observable, X: Array) -> Array:
    if isinstance(f, ScalarField):
        return f.value(X)
    return np.asarray(f(X), dtype=float).reshape(X.shape[0])


def _name(f: Observable) -> str:
    return f.name if isinstance(f, ScalarField) else getattr(f, "__name__", "f")


# -- curves -------------------------------------------------------------------

def convexity_violations(thetas: Sequence[float], values: Sequence[float], tol) -> list:
    """Consecutive triples violating convexity by more than ``tol``.

    ``tol`` may be a scalar or one value per sample (combined per triple).
    """
    t = np.asarray(thetas, dtype=float)
    v = np.asarray(values, dtype=float)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), v.shape)
    bad = []
    for k in range(1, len(t) - 1):
        w = (t[k + 1] - t[k]) / (t[k + 1] - t[k - 1])
        chord = w * v[k - 1] + (1 - w) * v[k + 1]
        if v[k] - chord > 2.0 * max(tol[k - 1], tol[k], tol[k + 1]):
            bad.append((float(t[k - 1]), float(t[k]), float(t[k + 1])))
    return bad


@dataclass(eq=False)
class ScgfCurve:
    """Sampled ``theta -> lambda_f(theta)``."""

    observable: str
    thetas: Array
    values: Array
    stderr: Array
    methods: list
    provenance: dict = field(default_factory=dict)
    admissibility: Optional[KappaVerdict] = None

    def __post_init__(self):
        order = np.argsort(self.thetas, kind="stable")
        self.thetas = np.asarray(self.thetas, dtype=float)[order]
        self.values = np.asarray(self.values, dtype=float)[order]
        self.stderr = np.asarray(self.stderr, dtype=float)[order]
        self.methods = [self.methods[i] for i in order]

    @property
    def tolerance(self) -> Array:
        """Per-point tolerance: solver tolerance or three standard errors."""
        tol = self.provenance.get("tol", 1e-10) * self.provenance.get("scale", 1.0)
        return np.maximum(3.0 * self.stderr, tol)

    def convexity_violations(self) -> list:
        return convexity_violations(self.thetas, self.values, self.tolerance)

    def rows(self):
        for t, v, s, m in zip(self.thetas, self.values, self.stderr, self.methods):
            yield float(t), float(v), float(s), m


def _langevin_log_W(model: DiffusionModel) -> Optional[ScalarField]:
    V = model.structure.potential
    d = V.dim
    if V.growth != "quadratic":
        return None
    gamma = model.structure.gamma
    p = langevin_lyapunov_params(1.0, 0.0, gamma, 0.5, d)
    _, H = kinetic_energy_lift(V)

    def qp(X):
        return np.einsum("ni,ni->n", X[:, :d], X[:, d:])

    def qp_grad(X):
        return np.concatenate([X[:, d:], X[:, :d]], axis=1)

    def qp_hess(X):
        Hm = np.zeros((2 * d, 2 * d))
        Hm[:d, d:] = np.eye(d)
        Hm[d:, :d] = np.eye(d)
        return np.broadcast_to(Hm, (X.shape[0], 2 * d, 2 * d)).copy()

    QP = ScalarField(2 * d, qp, qp_grad, qp_hess, name="q.p")
    alpha = model.params.get("alpha", 1.0)
    return p.theta * H + (p.epsilon * min(1.0, alpha)) * QP


def observable_admissibility(model: DiffusionModel, f: Observable,
                             radius_window: Sequence[float] = (4.0, 64.0)) -> Optional[KappaVerdict]:
    """Check ``kappa = sqrt(1 + f^2)`` against Psi for ``W = exp(V/2)``.

    Returns ``None`` when no Lyapunov function is known for the model or the
    observable has no analytic derivatives.
    """
    if not isinstance(f, ScalarField):
        return None
    if model.kind in ("reversible_gradient", "nonreversible_gradient"):
        log_W = 0.5 * model.structure.potential
    elif model.kind == "langevin":
        log_W = _langevin_log_W(model)
        if log_W is None:
            return None
    else:
        return None
    psi = log_witten_potential(model, log_W)
    kappa = (f * f + 1.0).compose(np.sqrt, lambda u: 0.5 / np.sqrt(u), lambda u: -0.25 * u ** -1.5, "sqrt")
    return check_kappa_admissible(psi, kappa, radius_window)


def scgf_spectral(model: Union[DiffusionModel, SparseGenerator], f: Observable, thetas: Sequence[float],
                  mesh: Optional[Mesh] = None, *, scheme: Optional[str] = None, override: bool = False,
                  tol: float = 1e-10, threads: Optional[int] = None,
                  radius_window: Sequence[float] = (4.0, 64.0)) -> ScgfCurve:
    """``lambda(theta f)`` for each theta from principal eigenvalues.

    ``theta = 0`` is always included and equals 0 exactly.

    Raises
    ------
    OutOfTheoryError
        If ``f`` fails the admissibility check and ``override`` is false.
    SolverError
        Propagated from the eigen-solver, annotated with theta.
    """
    if isinstance(model, SparseGenerator):
        gen = model
        dm = gen.model
    else:
        if mesh is None:
            raise ParameterError("a mesh is required")
        dm = model
        gen = assemble_generator(model, mesh, scheme)
    verdict = None
    if dm is not None and not override:
        verdict = observable_admissibility(dm, f, radius_window)
        if verdict is not None and not verdict.admissible:
            raise OutOfTheoryError(
                f"observable '{_name(f)}' is not dominated by Psi ({verdict.reason}); "
                "pass override=True to compute anyway")
    fv = sample(gen.mesh, f)
    grid = sorted(set(float(t) for t in thetas) | {0.0})

    def solve(th):
        if th == 0.0:
            return 0.0
        try:
            return principal_eigenpair(gen, th * fv, tol=tol, side="right").eigenvalue
        except SolverError as exc:
            raise type(exc)(f"theta={th:g}: {exc}") from exc

    n = threads or default_threads()
    if n > 1:
        with ThreadPoolExecutor(n) as ex:
            vals = list(ex.map(solve, grid))
    else:
        vals = [solve(t) for t in grid]
    prov = {"mesh": gen.mesh.to_dict(), "scheme": gen.scheme, "model": gen.model_name,
            "tol": tol, "scale": max(gen.scale, 1.0)}
    return ScgfCurve(_name(f), np.array(grid), np.array(vals), np.zeros(len(grid)),
                     ["spectral"] * len(grid), prov, verdict)


# -- simulation ---------------------------------------------------------------

class _Stepper:
    """One time step for a population of walkers ``X`` of shape ``(n, d)``."""

    def __init__(self, model: DiffusionModel, dt: float):
        self.model = model
        self.dt = float(dt)
        self.langevin = model.kind == "langevin"
        self.m = model.brownian_dim
        if self.langevin:
            self.d = model.dim // 2
            self.gradV = model.structure.potential.grad
            g = model.structure.gamma
            self.decay = math.exp(-g * dt)
            self.kick = math.sqrt(1.0 - self.decay ** 2)
        else:
            sig = model.constant_sigma
            self.sigT = None if sig is None else np.ascontiguousarray(sig.T) * math.sqrt(dt)

    def step(self, X: Array, xi: Array) -> Array:
        dt = self.dt
        if self.langevin:
            d = self.d
            q = X[:, :d]
            p = X[:, d:] - 0.5 * dt * self.gradV(q)
            q = q + 0.5 * dt * p
            p = self.decay * p + self.kick * xi
            q = q + 0.5 * dt * p
            p = p - 0.5 * dt * self.gradV(q)
            return np.concatenate([q, p], axis=1)
        drift = self.model.drift(X)
        if self.sigT is not None:
            return X + dt * drift + xi @ self.sigT
        sig = self.model.diffusion_factor(X)
        return X + dt * drift + math.sqrt(dt) * np.einsum("nij,nj->ni", sig, xi)


def _deposit(hist: Array, mesh: Mesh, X: Array, w: float) -> None:
    """Cloud-in-cell deposit of points ``X`` with weight ``w`` each."""
    lo = np.array(mesh.lo)
    h = mesh.h
    shape = np.array(mesh.n)
    t = np.clip((X - lo) / h, 0.0, shape - 1)
    base = np.minimum(np.floor(t).astype(np.int64), shape - 2)
    frac = t - base
    d = mesh.dim
    for corner in range(1 << d):
        bits = np.array([(corner >> (d - 1 - j)) & 1 for j in range(d)])
        wt = np.prod(np.where(bits, frac, 1.0 - frac), axis=1) * w
        idx = np.ravel_multi_index(tuple((base + bits).T), mesh.n)
        np.add.at(hist, idx, wt)


@dataclass(eq=False)
class TrajectoryAccumulator:
    """Running integrals along one path.

    ``integrals[name]`` is the trapezoidal ``int_0^t f(X_s) ds``;
    ``batches[name]`` holds time averages over equal consecutive blocks;
    ``histogram`` (when a mesh is given) is the empirical measure ``L_t``
    deposited with the same trapezoidal weights.
    """

    t: float
    integrals: dict
    batches: dict
    state: Array
    seed: Optional[int]
    n_steps: int
    dt: float
    mesh: Optional[Mesh] = None
    histogram: Optional[Array] = None

    def time_average(self, name: str) -> float:
        return self.integrals[name] / self.t

    def batch_stderr(self, name: str) -> float:
        b = np.asarray(self.batches[name])
        return float(b.std(ddof=1) / math.sqrt(b.size)) if b.size > 1 else float("nan")

    @property
    def empirical_measure(self) -> Array:
        if self.histogram is None:
            raise ValueError("no mesh was attached to the simulation")
        return self.histogram / self.histogram.sum()


def simulate(model: DiffusionModel, x0, dt: float, T: float, seed: Optional[int] = None, *,
             observables: Optional[dict] = None, mesh: Optional[Mesh] = None, n_batches: int = 20,
             safety: float = 1e6, chunk_steps: int = 4096) -> TrajectoryAccumulator:
    """Integrate one path of ``model`` and accumulate observables.

    Euler-Maruyama for generic models; for Langevin a BAOAB splitting with the
    exact Ornstein-Uhlenbeck update of the momentum.

    Raises
    ------
    BlowUpError
        When a coordinate exceeds ``safety`` in absolute value.
    """
    if dt <= 0 or T < dt:
        raise ParameterError("need dt > 0 and T >= dt")
    observables = dict(observables or {})
    n_steps = int(round(T / dt))
    X = np.asarray(x0, dtype=float).reshape(1, model.dim).copy()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    stepper = _Stepper(model, dt)
    m = model.brownian_dim
    integrals = {k: 0.0 for k in observables}
    n_batches = max(1, min(n_batches, n_steps))
    edges = np.linspace(0, n_steps, n_batches + 1).round().astype(int)
    batch_acc = {k: np.zeros(n_batches) for k in observables}
    hist = np.zeros(mesh.size) if mesh is not None else None
    prev = {k: float(_values(f, X)[0]) for k, f in observables.items()}
    done = 0
    while done < n_steps:
        k = min(chunk_steps, n_steps - done)
        noise = rng.standard_normal((k, m))
        path = np.empty((k + 1, model.dim))
        path[0] = X[0]
        with np.errstate(over="ignore", invalid="ignore"):
            for s in range(k):
                X = stepper.step(X, noise[s:s + 1])
                path[s + 1] = X[0]
        bad = ~np.all(np.abs(path[1:]) < safety, axis=1)
        if bad.any():
            t_bad = (done + int(np.argmax(bad)) + 1) * dt
            raise BlowUpError(f"state left the safety box at t={t_bad:.6g}", time=t_bad)
        if mesh is not None:
            _deposit(hist, mesh, path[:-1], 0.5 * dt)
            _deposit(hist, mesh, path[1:], 0.5 * dt)
        # step done+s falls in batch searchsorted(edges, done+s, "right") - 1
        which = np.searchsorted(edges, np.arange(done, done + k), side="right") - 1
        for name, f in observables.items():
            vals = _values(f, path[1:])
            left = np.concatenate([[prev[name]], vals[:-1]])
            inc = 0.5 * dt * (left + vals)
            integrals[name] += float(inc.sum())
            np.add.at(batch_acc[name], which, inc)
            prev[name] = float(vals[-1])
        done += k
    lengths = np.diff(edges) * dt
    batches = {k: v / lengths for k, v in batch_acc.items()}
    return TrajectoryAccumulator(n_steps * dt, integrals, batches, X[0].copy(), seed, n_steps, dt,
                                 mesh, hist)


# -- population methods --------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryEstimate:
    """Estimate of ``lambda`` with its standard error and diagnostics."""

    estimate: float
    stderr: float
    method: str
    ess: float
    n: int
    T: float
    details: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.estimate, self.stderr))


def _streams(seed, n_chunks: int, extra: int = 0):
    ss = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(n_chunks + extra)]


def _map_chunks(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _initial_population(model: DiffusionModel, n: int, x0) -> Array:
    if x0 is None:
        return np.zeros((n, model.dim))
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 2:
        if x0.shape != (n, model.dim):
            raise ParameterError("initial population has the wrong shape")
        return x0.copy()
    return np.broadcast_to(x0.reshape(1, model.dim), (n, model.dim)).copy()


def _advance(stepper: _Stepper, f: Observable, X: Array, n_steps: int, rng, theta: float,
             safety: float, t0: float = 0.0) -> tuple[Array, Array]:
    """Advance a chunk and return ``(X, theta * int f)`` (trapezoidal)."""
    acc = np.zeros(X.shape[0])
    prev = _values(f, X) if theta != 0.0 else None
    m = stepper.m
    for s in range(n_steps):
        X = stepper.step(X, rng.standard_normal((X.shape[0], m)))
        if not np.all(np.abs(X) < safety):
            raise BlowUpError(f"walker left the safety box at t={t0 + (s + 1) * stepper.dt:.6g}",
                              time=t0 + (s + 1) * stepper.dt)
        if theta != 0.0:
            cur = _values(f, X)
            acc += 0.5 * stepper.dt * (prev + cur)
            prev = cur
    return X, theta * acc


def scgf_monte_carlo(model: DiffusionModel, f: Observable, theta: float, n_replicas: int, T: float,
                     dt: float, seed: Optional[int] = None, *, x0=None, burn_in: float = 5.0,
                     threads: Optional[int] = None, safety: float = 1e6) -> TrajectoryEstimate:
    """Naive estimator ``(1/T) log mean exp(theta int_0^T f)``.

    Replicas start from ``x0`` (default the origin) and are relaxed for
    ``burn_in`` time units before accumulation.  The variance of the weights
    grows exponentially in ``theta^2 T``; check ``ess`` and prefer
    :func:`scgf_cloning` when it collapses.

    Raises
    ------
    NumericRangeError
        If a weight ``exp(theta int f)`` is outside the double range.
    """
    if n_replicas < 100:
        raise ParameterError("at least 100 replicas are required")
    if dt <= 0 or T < dt:
        raise ParameterError("need dt > 0 and T >= dt")
    if theta == 0.0:
        return TrajectoryEstimate(0.0, 0.0, "mc", float(n_replicas), n_replicas, T)
    stepper = _Stepper(model, dt)
    n_chunks = -(-n_replicas // CHUNK)
    rngs = _streams(seed, n_chunks)
    X0 = _initial_population(model, n_replicas, x0)
    n_burn = int(round(burn_in / dt))
    n_steps = int(round(T / dt))

    def run(k):
        sl = slice(k * CHUNK, min((k + 1) * CHUNK, n_replicas))
        X = X0[sl]
        if n_burn:
            X, _ = _advance(stepper, f, X, n_burn, rngs[k], 0.0, safety)
        _, lw = _advance(stepper, f, X, n_steps, rngs[k], theta, safety, burn_in)
        return lw

    lw = np.concatenate(_map_chunks(run, list(range(n_chunks)), threads or default_threads()))
    if np.max(np.abs(lw)) > 709.0:
        raise NumericRangeError(
            f"theta * int f reaches {np.max(np.abs(lw)):.1f}; exp overflows double precision, use cloning")
    lmean = float(logsumexp(lw) - math.log(n_replicas))
    w = np.exp(lw - lw.max())
    ess = float(w.sum() ** 2 / np.sum(w ** 2))
    rel = float(w.std(ddof=1) / (w.mean() * math.sqrt(n_replicas)))
    return TrajectoryEstimate(lmean / T, rel / T, "mc", ess, n_replicas, T,
                              {"log_mean_weight": lmean, "burn_in": burn_in})


def scgf_cloning(model: DiffusionModel, f: Observable, theta: float, n_walkers: int, T: float,
                 dt: float, resample_every: float, seed: Optional[int] = None, *, x0=None,
                 burn_in: float = 5.0, discard: float = 0.2, n_blocks: int = 10,
                 threads: Optional[int] = None, safety: float = 1e6) -> TrajectoryEstimate:
    """Population (cloning) estimator of ``lambda(theta f)``.

    Each epoch of length ``resample_every`` adds ``log mean exp(theta int f)``
    over the walkers to a running total, then resamples the population
    systematically in proportion to the weights.  The estimate averages the
    per-epoch rates after dropping the first ``discard`` fraction of epochs,
    during which the population relaxes to the tilted law; ``discard=0``
    gives the plain total divided by T.  The standard error comes from
    ``n_blocks`` block means of the retained epochs.

    Raises
    ------
    DegeneracyError
        When the effective sample size of an epoch falls below 2.
    """
    if n_walkers < 100:
        raise ParameterError("at least 100 walkers are required")
    steps_per_epoch = resample_every / dt
    if abs(steps_per_epoch - round(steps_per_epoch)) > 1e-9 * max(1.0, steps_per_epoch) or round(steps_per_epoch) < 1:
        raise ParameterError("resample_every must be a positive multiple of dt")
    steps_per_epoch = int(round(steps_per_epoch))
    n_epochs = int(round(T / resample_every))
    if n_epochs < 2:
        raise ParameterError("T must span at least two epochs")
    if not 0.0 <= discard < 1.0:
        raise ParameterError("discard must lie in [0, 1)")
    if theta == 0.0:
        return TrajectoryEstimate(0.0, 0.0, "cloning", float(n_walkers), n_walkers, T)
    stepper = _Stepper(model, dt)
    n_chunks = -(-n_walkers // CHUNK)
    rngs = _streams(seed, n_chunks, extra=1)
    resample_rng = rngs[-1]
    X = _initial_population(model, n_walkers, x0)
    n_burn = int(round(burn_in / dt))
    nthreads = threads or default_threads()
    chunks = list(range(n_chunks))

    def advance(k, n, th, t0):
        sl = slice(k * CHUNK, min((k + 1) * CHUNK, n_walkers))
        return _advance(stepper, f, X[sl], n, rngs[k], th, safety, t0)

    if n_burn:
        X = np.concatenate([r[0] for r in _map_chunks(lambda k: advance(k, n_burn, 0.0, 0.0),
                                                      chunks, nthreads)])
    epoch_logs = np.empty(n_epochs)
    min_ess = float(n_walkers)
    for e in range(n_epochs):
        t0 = burn_in + e * resample_every
        out = _map_chunks(lambda k: advance(k, steps_per_epoch, theta, t0), chunks, nthreads)
        X = np.concatenate([o[0] for o in out])
        lw = np.concatenate([o[1] for o in out])
        if not np.all(np.isfinite(lw)):
            raise NumericRangeError("non-finite log weights in an epoch")
        epoch_logs[e] = logsumexp(lw) - math.log(n_walkers)
        w = np.exp(lw - lw.max())
        ess = float(w.sum() ** 2 / np.sum(w ** 2))
        min_ess = min(min_ess, ess)
        if ess < 2.0:
            raise DegeneracyError(
                f"effective sample size {ess:.2f} < 2 at epoch {e}; shorten resample_every")
        idx = _kernels.systematic_resample(w / w.sum(), float(resample_rng.random()))
        X = X[idx]
    keep = epoch_logs[int(math.floor(discard * n_epochs)):] / resample_every
    nb = max(2, min(n_blocks, keep.size))
    blocks = np.array([b.mean() for b in np.array_split(keep, nb)])
    est = float(keep.mean())
    se = float(blocks.std(ddof=1) / math.sqrt(nb))
    return TrajectoryEstimate(est, se, "cloning", min_ess, n_walkers, T,
                              {"total": float(epoch_logs.sum() / T), "epochs": n_epochs,
                               "discarded": int(math.floor(discard * n_epochs))})


def finite_time_diagnostic(estimator: Callable[..., TrajectoryEstimate], T: float, **kwargs) -> dict:
    """Run ``estimator`` at ``T`` and ``2T`` and report the difference."""
    a = estimator(T=T, **kwargs)
    b = estimator(T=2 * T, **kwargs)
    return {"T": a.estimate, "2T": b.estimate, "difference": b.estimate - a.estimate,
            "stderr": math.hypot(a.stderr, b.stderr)}


__all__ += ["finite_time_diagnostic"]
