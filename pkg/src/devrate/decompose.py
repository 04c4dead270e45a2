"""Symmetric and antisymmetric parts of the Donsker-Varadhan rate function.

For ``nu = e^v mu`` the rate function splits as ``I = I_S + I_A`` with

* ``I_S = 1/4 int grad v . S grad v dnu`` (a Fisher information), and
* ``I_A = 1/4 int grad psi . S grad psi dnu`` where ``psi`` solves the weighted
  Poisson problem ``-div(nu S grad psi) = nu L_A v``.

On the mesh both are edge quadratures with weights ``w_e = S_ii(mid) (nu_x +
nu_y) / 2``, i.e. ``M = G^T diag(w) G`` with ``G`` the edge-difference
operator.  The Poisson right-hand side is ``b = -L_A^T nu``, the exact discrete
counterpart of ``nu L_A v``; it sums to zero over every connected component
of the diffusion graph up to the accuracy of ``mu_h``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import trapezoid
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .errors import ConvergenceError, IncompatibleRhsError, ParameterError
from .grid import (
    GeneratorSplit,
    Mesh,
    SparseGenerator,
    assemble_generator,
    gradient_operator,
    sample,
    split_generator,
)
from .model import DiffusionModel, ScalarField, kinetic_energy_lift, langevin
from .scgf import default_threads
from .spectral import invariant_measure

Array = np.ndarray

__all__ = [
    "DecompositionContext",
    "Perturbation",
    "PoissonSolution",
    "DecompositionResult",
    "AutocorrelationEstimate",
    "symmetric_part",
    "fisher_information",
    "solve_poisson",
    "antisymmetric_part",
    "decompose",
    "variational_objective",
    "friction_sweep",
    "autocorrelation_ia",
    "position_perturbation",
    "hamiltonian_perturbation",
    "mixed_perturbation",
    "mixed_limit",
    "REVERSIBLE_RTOL",
]

REVERSIBLE_RTOL = 1e-8


@dataclass(eq=False)
class DecompositionContext:
    """Everything shared by decompositions on one (model, mesh) pair."""

    model: DiffusionModel
    mesh: Mesh
    generator: SparseGenerator
    mu: Array
    split: GeneratorSplit
    G: sp.csr_matrix
    edge_axis: Array
    src: Array
    dst: Array
    S_edge: Array
    labels: Array
    n_components: int

    @classmethod
    def build(cls, model: DiffusionModel, mesh: Mesh, scheme: Optional[str] = None,
              generator: Optional[SparseGenerator] = None, mu: Optional[Array] = None) -> "DecompositionContext":
        gen = generator or assemble_generator(model, mesh, scheme)
        mu = invariant_measure(gen) if mu is None else np.asarray(mu, dtype=float)
        split = split_generator(gen, mu)
        G, axis, src, dst = gradient_operator(mesh)
        S_edge = np.empty(src.size)
        for i in range(mesh.dim):
            sel = axis == i
            mid = mesh.edge_midpoints(i, src[sel])
            S = model.diffusion_matrix(mid)
            S_edge[sel] = S[..., i, i] if S.ndim == 3 else S[i, i]
        active = S_edge > 0
        adj = sp.coo_matrix((np.ones(int(active.sum())), (src[active], dst[active])),
                            shape=(mesh.size, mesh.size))
        ncomp, labels = connected_components(adj, directed=False)
        return cls(model, mesh, gen, mu, split, G, axis, src, dst, S_edge, labels, ncomp)

    @property
    def reversible(self) -> bool:
        """True when ``L_A`` vanishes relative to ``L`` (round-off level)."""
        return self.split.antisymmetric_ratio <= REVERSIBLE_RTOL

    def edge_weights(self, nu: Array) -> Array:
        return self.S_edge * 0.5 * (nu[self.src] + nu[self.dst])

    def stiffness(self, nu: Array) -> sp.csr_matrix:
        return (self.G.T @ sp.diags(self.edge_weights(nu)) @ self.G).tocsr()

    def perturbation(self, v) -> "Perturbation":
        return Perturbation.from_values(self, v)


@dataclass(eq=False)
class Perturbation:
    """``nu = e^v mu_h / Z`` on the mesh, with ``log_norm = log Z``."""

    v: Array
    nu: Array
    log_norm: float

    @classmethod
    def from_values(cls, ctx: DecompositionContext, v) -> "Perturbation":
        v = sample(ctx.mesh, v)
        if not np.all(np.isfinite(v)):
            raise ParameterError("perturbation must be finite on the mesh")
        lw = v + np.log(ctx.mu)
        top = lw.max()
        w = np.exp(lw - top)
        Z = w.sum()
        nu = w / Z
        if np.any(nu <= 0):
            raise ParameterError("perturbed measure vanishes on part of the mesh")
        return cls(v, nu, float(top + math.log(Z)))


def symmetric_part(ctx: DecompositionContext, pert: Perturbation, *, check: bool = True,
                   rtol: float = 0.05) -> float:
    """``I_S = 1/4 sum_e w_e (G v)_e^2``.

    With ``check`` the node-based Fisher form is computed too and a warning is
    issued when the two quadratures disagree by more than ``rtol``.
    """
    gv = ctx.G @ pert.v
    value = 0.25 * float(np.sum(ctx.edge_weights(pert.nu) * gv ** 2))
    if check:
        fisher = fisher_information(ctx, pert)
        if abs(fisher - value) > rtol * max(value, 1e-3):
            warnings.warn(f"edge and Fisher forms of I_S disagree: {value:.6g} vs {fisher:.6g}",
                          RuntimeWarning, stacklevel=2)
    return value


def fisher_information(ctx: DecompositionContext, pert: Perturbation) -> float:
    """``1/4 sum mu grad rho . S grad rho / rho`` with node-centred differences."""
    mesh = ctx.mesh
    rho = (pert.nu / ctx.mu).reshape(mesh.n)
    X = mesh.points()
    S = ctx.model.diffusion_matrix(X)
    if S.ndim == 2:
        S = np.broadcast_to(S, (mesh.size,) + S.shape)
    grads = []
    for i in range(mesh.dim):
        if mesh.periodic[i]:
            g = (np.roll(rho, -1, axis=i) - np.roll(rho, 1, axis=i)) / (2 * mesh.h[i])
        else:
            g = np.gradient(rho, mesh.h[i], axis=i)
        grads.append(g.ravel())
    gr = np.stack(grads, axis=1)
    quad = np.einsum("ni,nij,nj->n", gr, S, gr)
    return 0.25 * float(np.sum(ctx.mu * quad / rho.ravel()))


@dataclass(eq=False)
class PoissonSolution:
    """Solution of ``M psi = b`` pinned to mean zero under ``nu`` per component."""

    psi: Array
    rhs: Array
    residual: float
    compatibility_defect: float
    chain_rule_defect: float
    iterations: int
    history: list = field(default_factory=list)
    reversible: bool = False
    rhs_sum: float = 0.0


def _component_sums(labels: Array, n: int, x: Array) -> Array:
    return np.bincount(labels, weights=x, minlength=n)


def _pcg(M: sp.csr_matrix, b: Array, tol: float, maxiter: int):
    """Jacobi-preconditioned conjugate gradients for an SPD system."""
    d = M.diagonal().copy()
    d[d <= 0] = 1.0
    dinv = 1.0 / d
    x = np.zeros_like(b)
    r = b.copy()
    z = dinv * r
    rz = float(r @ z)
    # residual measured in the Jacobi norm sqrt(r D^-1 r), i.e. relative to nu
    bnorm = math.sqrt(rz)
    history = [1.0]
    if bnorm == 0.0:
        return x, 0.0, 0, history
    p = z.copy()
    best, stall = 1.0, 0
    for k in range(1, maxiter + 1):
        Ap = M @ p
        pAp = float(p @ Ap)
        if not pAp > 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = dinv * r
        rz_new = float(r @ z)
        rel = math.sqrt(max(rz_new, 0.0)) / bnorm
        history.append(rel)
        if rel <= tol:
            return x, rel, k, history
        if rel < 0.5 * best:
            best, stall = rel, 0
        else:
            stall += 1
            if stall > max(2000, M.shape[0] // 4):
                break
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"CG stagnated at relative residual {history[-1]:.3e}",
                           residual=history[-1], history=history)


def _ground(M: sp.csr_matrix, b: Array, pins: Array) -> tuple[sp.csr_matrix, Array]:
    """Replace the rows and columns of ``pins`` by the identity (psi = 0 there)."""
    keep = np.ones(M.shape[0])
    keep[pins] = 0.0
    K = sp.diags(keep)
    E = sp.diags(1.0 - keep)
    return (K @ M @ K + E).tocsr(), b * keep


def solve_poisson(ctx: DecompositionContext, pert: Perturbation, *, tol: float = 1e-10,
                  maxiter: Optional[int] = None, compat_rtol: float = 1e-2) -> PoissonSolution:
    """Solve the weighted Poisson problem for ``psi_v``.

    The null space (constants on each component) is removed by grounding one
    node per component; the solution is then shifted to mean zero under ``nu``.

    The right-hand side must have vanishing conditional mean on every connected
    component of the diffusion graph (one component for elliptic models, one
    per position line for Langevin).  The relative size of the violation,
    ``||E_nu[L_A v | component]||_{L2(nu)}`` over the cancellation-free
    ``L1(nu)`` size of ``L_A v``, is the
    compatibility defect; it is removed by a ``nu``-weighted projection when
    below ``compat_rtol``.

    Raises
    ------
    IncompatibleRhsError
        When the compatibility defect exceeds ``compat_rtol``.
    ConvergenceError
        When CG stagnates.
    """
    N = ctx.mesh.size
    LAv = ctx.split.antisymmetric @ pert.v
    chain = float(abs(np.sum(pert.nu * LAv)))
    if ctx.reversible:
        return PoissonSolution(np.zeros(N), np.zeros(N), 0.0, 0.0, chain, 0, [], True, 0.0)
    if np.ptp(pert.v) == 0.0:
        # nu = mu: the right-hand side vanishes identically
        return PoissonSolution(np.zeros(N), np.zeros(N), 0.0, 0.0, chain, 0, [], False, 0.0)
    b = -(ctx.split.antisymmetric.T @ pert.nu)
    rhs_sum = float(abs(b.sum()))
    nc = ctx.n_components
    Bc = _component_sums(ctx.labels, nc, b)
    nuc = _component_sums(ctx.labels, nc, pert.nu)
    A = ctx.split.antisymmetric.tocoo()
    # ||L_A v||_{L1(nu)} without cancellation between stencil terms
    size = np.bincount(A.row, weights=np.abs(A.data * (pert.v[A.col] - pert.v[A.row])),
                       minlength=N)
    l1 = float(np.sum(pert.nu * size))
    defect = float(math.sqrt(np.sum(Bc ** 2 / nuc)) / l1) if l1 > 0 else 0.0
    if defect > compat_rtol:
        raise IncompatibleRhsError(
            f"L_A v has conditional mean {defect:.3e} (relative) on the diffusion components; "
            "the perturbation is not in H^-1(nu)")
    b = b - pert.nu * (Bc / nuc)[ctx.labels]
    M = ctx.stiffness(pert.nu)
    # one grounded node per component (the heaviest) removes the null space
    order = np.lexsort((-pert.nu, ctx.labels))
    first = np.r_[0, np.flatnonzero(np.diff(ctx.labels[order])) + 1]
    Mg, bg = _ground(M, b, order[first])
    psi, rel, iters, hist = _pcg(Mg, bg, tol, maxiter or 20 * N)
    psi = psi - (_component_sums(ctx.labels, nc, pert.nu * psi) / nuc)[ctx.labels]
    bn = float(np.linalg.norm(b))
    res = float(np.linalg.norm(M @ psi - b) / bn) if bn > 0 else 0.0
    return PoissonSolution(psi, b, res, defect, chain, iters, hist, False, rhs_sum)


def antisymmetric_part(ctx: DecompositionContext, pert: Perturbation, psi: Union[Array, PoissonSolution]) -> float:
    """``I_A = 1/4 sum_e w_e (G psi)_e^2``; exactly zero for reversible models."""
    if isinstance(psi, PoissonSolution):
        if psi.reversible:
            return 0.0
        psi = psi.psi
    if ctx.reversible:
        return 0.0
    g = ctx.G @ psi
    return 0.25 * float(np.sum(ctx.edge_weights(pert.nu) * g ** 2))


def variational_objective(ctx: DecompositionContext, pert: Perturbation, rhs: Array, psi: Array) -> float:
    """``1/2 b . psi - 1/4 psi^T M psi``, maximized by the Poisson solution."""
    g = ctx.G @ psi
    return 0.5 * float(rhs @ psi) - 0.25 * float(np.sum(ctx.edge_weights(pert.nu) * g ** 2))


@dataclass(eq=False)
class DecompositionResult:
    I_S: float
    I_A: float
    psi: Array
    poisson_residual: float
    compatibility_defect: float
    chain_rule_defect: float
    fisher: float
    iterations: int

    @property
    def total(self) -> float:
        return self.I_S + self.I_A


def decompose(ctx: DecompositionContext, pert: Union[Perturbation, Array, ScalarField], **kwargs) -> DecompositionResult:
    """Compute ``I_S``, ``I_A`` and ``psi_v`` for one perturbation."""
    if not isinstance(pert, Perturbation):
        pert = ctx.perturbation(pert)
    IS = symmetric_part(ctx, pert, check=False)
    fisher = fisher_information(ctx, pert)
    sol = solve_poisson(ctx, pert, **kwargs)
    IA = antisymmetric_part(ctx, pert, sol)
    return DecompositionResult(IS, IA, sol.psi, sol.residual, sol.compatibility_defect,
                               sol.chain_rule_defect, fisher, sol.iterations)


# -- Langevin friction sweep ----------------------------------------------------

PerturbationFn = Callable[[Array, float], Array]


def position_perturbation(m: float = 1.0) -> PerturbationFn:
    """``v(q) = m q_1 - m^2 / 2`` (a shift of the position marginal by m)."""
    return lambda X, gamma: m * X[:, 0] - 0.5 * m * m


def hamiltonian_perturbation(c: float = 0.5, V: Optional[ScalarField] = None) -> PerturbationFn:
    """``v = c H`` with ``H = V(q) + |p|^2/2`` (quadratic V by default)."""
    def fn(X, gamma):
        d = X.shape[1] // 2
        pot = 0.5 * np.sum(X[:, :d] ** 2, axis=1) if V is None else V.value(X[:, :d])
        return c * (pot + 0.5 * np.sum(X[:, d:] ** 2, axis=1))
    return fn


def mixed_perturbation(v: Callable[[Array], Array], vtilde: Callable[[Array], Array]) -> PerturbationFn:
    """``v_gamma = v(q) + vtilde(q, p) / gamma`` for the overdamped-limit expansion."""
    return lambda X, gamma: v(X) + vtilde(X) / gamma


def mixed_limit(dv_dq: Callable[[Array], Array], dvt_dp: Callable[[Array], Array],
                v: Callable[[Array], Array], n: int = 801, R: float = 10.0) -> float:
    """``1/4 [int |d_p vtilde|^2 dnu + int |v'|^2 dnu_bar]`` for d = 1, quadratic V.

    ``nu = e^v mu`` with ``mu`` standard Gaussian in (q, p); evaluated by
    tensor trapezoidal quadrature.
    """
    x = np.linspace(-R, R, n)
    Q, P = np.meshgrid(x, x, indexing="ij")
    X = np.stack([Q.ravel(), P.ravel()], axis=1)
    w = np.exp(v(X) - 0.5 * (X ** 2).sum(axis=1))
    w /= w.sum()
    return 0.25 * float(np.sum(w * (dvt_dp(X) ** 2 + dv_dq(X) ** 2)))


def friction_sweep(V: Optional[ScalarField], family: dict, gammas: Sequence[float], mesh: Mesh, *,
                   scheme: Optional[str] = None, threads: Optional[int] = None) -> list[dict]:
    """Rate-function parts along a friction sweep of Langevin dynamics.

    ``family`` maps names to callables ``(X, gamma) -> v``.  Returns rows with
    keys ``name, gamma, IS, IA, I, gamma_times_I, I_over_gamma``.
    """
    gammas = [float(g) for g in gammas]

    def run(gamma):
        model = langevin(V, gamma, mesh.dim // 2)
        ctx = DecompositionContext.build(model, mesh, scheme)
        X = mesh.points()
        out = []
        for name, fn in family.items():
            r = decompose(ctx, fn(X, gamma))
            out.append({"name": name, "gamma": gamma, "IS": r.I_S, "IA": r.I_A, "I": r.total,
                        "gamma_times_I": gamma * r.total, "I_over_gamma": r.total / gamma})
        return out

    n = threads or default_threads()
    if n > 1:
        with ThreadPoolExecutor(n) as ex:
            parts = list(ex.map(run, gammas))
    else:
        parts = [run(g) for g in gammas]
    rows = [row for part in parts for row in part]
    rows.sort(key=lambda r: (r["name"], r["gamma"]))
    return rows


# -- autocorrelation route ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AutocorrelationEstimate:
    estimate: float
    stderr: float
    times: Array
    correlation: Array
    truncated: bool
    n: int


def _node_gradient(mesh: Mesh, f: Array) -> Array:
    F = f.reshape(mesh.n)
    out = []
    for i in range(mesh.dim):
        if mesh.periodic[i]:
            g = (np.roll(F, -1, axis=i) - np.roll(F, 1, axis=i)) / (2 * mesh.h[i])
        else:
            g = np.gradient(F, mesh.h[i], axis=i)
        out.append(g.ravel())
    return np.stack(out, axis=1)


def autocorrelation_ia(ctx: DecompositionContext, pert: Perturbation, T: float, N: int, dt: float,
                       seed: Optional[int] = None, *, n_batches: int = 20, stride: int = 1,
                       solution: Optional[PoissonSolution] = None) -> AutocorrelationEstimate:
    """Estimate ``I_A = 1/4 int_0^inf E_nu[g(X_0) g(X_t)] dt`` with ``g = L_A v``.

    ``X`` follows the ``nu``-reversible dynamics
    ``dX = S grad log nu dt + div S dt + sigma dB`` with the gridded log-density
    gradient interpolated multilinearly.  ``g`` is the compatible discrete
    right-hand side divided by ``nu``.  Trajectories start from ``nu`` (node
    drawn by weight, uniform jitter inside the cell) and the time integral is
    truncated at ``T`` (trapezoidal rule).  A warning is issued when the
    correlation at ``T`` still exceeds 5% of its initial value.
    """
    mesh = ctx.mesh
    model = ctx.model
    if ctx.reversible:
        times = np.arange(0, int(round(T / dt)) + 1, stride) * dt
        return AutocorrelationEstimate(0.0, 0.0, times, np.zeros(times.size), False, N)
    sol = solution or solve_poisson(ctx, pert)
    g_nodes = sol.rhs / pert.nu
    logd = np.log(pert.nu)
    grad_log = _node_gradient(mesh, logd)
    S_nodes = model.diffusion_matrix(mesh.points())
    if S_nodes.ndim == 2:
        drift_nodes = grad_log @ S_nodes.T
    else:
        drift_nodes = np.einsum("nij,nj->ni", S_nodes, grad_log)
    table = np.ascontiguousarray(np.column_stack([drift_nodes, g_nodes]))
    lo = np.array(mesh.lo)
    h = mesh.h
    shape = np.array(mesh.n, dtype=np.int64)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    idx = rng.choice(mesh.size, size=N, p=pert.nu)
    X = mesh.points()[idx] + (rng.random((N, mesh.dim)) - 0.5) * h
    hi_box = lo + (shape - 1) * h
    X = np.clip(X, lo, hi_box)
    sig = model.constant_sigma
    d = mesh.dim
    n_steps = int(round(T / dt))
    vals = _kernels.multilinear_interp(table, lo, h, shape, X)
    g0 = vals[:, d]
    samples = [g0 * g0]
    for s in range(1, n_steps + 1):
        drift = vals[:, :d] + model.diffusion_divergence(X)
        xi = rng.standard_normal((N, model.brownian_dim))
        if sig is not None:
            X = X + dt * drift + math.sqrt(dt) * xi @ sig.T
        else:
            X = X + dt * drift + math.sqrt(dt) * np.einsum("nij,nj->ni", model.sigma(X), xi)
        # reflect at the truncation box, mirroring the discrete closure
        X = np.where(X < lo, 2 * lo - X, X)
        X = np.where(X > hi_box, 2 * hi_box - X, X)
        vals = _kernels.multilinear_interp(table, lo, h, shape, X)
        if s % stride == 0:
            samples.append(g0 * vals[:, d])
    prod = np.array(samples)
    times = np.arange(prod.shape[0]) * dt * stride
    corr = prod.mean(axis=1)
    per_traj = 0.25 * trapezoid(prod, times, axis=0)
    est = float(per_traj.mean())
    nb = max(2, min(n_batches, N))
    batch = np.array([b.mean() for b in np.array_split(per_traj, nb)])
    se = float(batch.std(ddof=1) / math.sqrt(nb))
    truncated = bool(abs(corr[-1]) > 0.05 * abs(corr[0]))
    if truncated:
        warnings.warn(f"correlation at T={T:g} is {abs(corr[-1] / corr[0]):.1%} of its initial value; "
                      "increase T", RuntimeWarning, stacklevel=2)
    return AutocorrelationEstimate(est, se, times, corr, truncated, N)
