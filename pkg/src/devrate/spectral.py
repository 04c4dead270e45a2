"""Principal eigenpairs of tilted generators and related diagnostics.

``Q = L_h + diag(f)`` has nonnegative off-diagonal entries, so ``Q + cI`` is a
nonnegative irreducible matrix and its Perron pair gives the principal
eigenvalue ``lambda(f)`` with a strictly positive eigenvector.  The solver runs
power iteration on the shifted matrix (compiled kernel) and, once a rough
estimate is available, switches to shifted inverse iteration
``(sigma I - Q)^{-1}`` with ``sigma`` above ``lambda``.  That matrix is a
nonsingular M-matrix whose inverse is entrywise positive, so every iterate
stays positive and the Perron structure is preserved throughout.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import stats

from . import _kernels
from .errors import ConvergenceError, PositivityViolationError
from .grid import Mesh, SparseGenerator, assemble_generator, check_measure, sample

Array = np.ndarray

__all__ = [
    "SpectralSolution",
    "DecayFit",
    "principal_eigenpair",
    "doob_transform",
    "invariant_measure",
    "ergodicity_decay",
    "box_doubling_sensitivity",
]

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200_000


@dataclass(eq=False)
class SpectralSolution:
    """Perron pair of ``Q = L_h + diag(f)``.

    ``right`` is max-normalized and strictly positive; ``left`` sums to one.
    ``residual`` is ``||Q h - lambda h||_inf`` and ``scale`` the magnitude used
    to make the tolerance relative.
    """

    eigenvalue: float
    right: Optional[Array]
    left: Optional[Array]
    residual: float
    left_residual: float
    iterations: int
    scale: float
    pointwise_residual: float = float("nan")
    history: list = field(default_factory=list)

    @property
    def tilted_density(self) -> Array:
        """Stationary law of the Doob transform, ``l * h`` renormalized."""
        if self.left is None or self.right is None:
            raise ValueError("both eigenvectors are needed")
        w = self.left * self.right
        return w / w.sum()


def _rayleigh(Q: sp.csr_matrix, x: Array) -> tuple[float, float]:
    Qx = Q @ x
    lam = float(x @ Qx / (x @ x))
    return lam, float(np.max(np.abs(Qx - lam * x)))


def _perron_vector(Q: sp.csr_matrix, shift: float, scale: float, upper: float, tol: float,
                   max_iter: int, accelerate: bool, warmup: int, x0: Optional[Array] = None):
    """Perron vector of ``Q`` (max-normalized) with its eigenvalue."""
    n = Q.shape[0]
    x = np.ones(n) if x0 is None else np.array(x0, dtype=float)
    x /= x.max()
    target = tol * scale
    history = []
    it = 0
    lam, res = _rayleigh(Q, x)
    history.append(res)
    if res <= target:
        return x, lam, res, it, history
    block = 50
    budget = min(warmup, max_iter) if accelerate else max_iter
    while it < budget:
        step = min(block, budget - it)
        _kernels.power_iterate(Q, shift, x, step)
        it += step
        lam, res = _rayleigh(Q, x)
        history.append(res)
        if res <= target:
            return x, lam, res, it, history
        if accelerate and it >= 200 and len(history) > 3 and history[-1] > 0.5 * history[-4]:
            break
    if not accelerate:
        raise ConvergenceError(f"power iteration did not converge in {it} iterations (residual {res:.3e})",
                               residual=res, history=history)
    I = sp.identity(n, format="csc")
    Qc = Q.tocsc()
    delta = 1e-10 * scale
    factorizations = 0
    rq_failures = 0
    while it < max_iter and factorizations < 200:
        # Collatz-Wielandt: max_i (Qx)_i / x_i bounds the Perron root from above
        Qx = Q @ x
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(x > 0, Qx / x, np.inf)
        sigma = min(float(np.max(ratios)), upper) + delta
        # The bound is loose when the tail entries of x are still inaccurate;
        # a shift just above the Rayleigh estimate converges much faster.
        rq_shift = rq_failures < 3 and lam + 10.0 * res + delta < sigma
        if rq_shift:
            sigma = lam + 10.0 * res + delta
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sp.SparseEfficiencyWarning)
            lu = spla.splu((sigma * I - Qc).tocsc())
        factorizations += 1
        y = x
        for _ in range(5):
            y = lu.solve(y)
            it += 1
            if not np.all(np.isfinite(y)):
                break
            y = y / y[np.argmax(np.abs(y))]
            if np.min(y) < -1e-8:
                break
            # (sigma I - Q)^-1 is entrywise positive, so sign flips at the
            # round-off level of the solve carry no information
            y = np.maximum(np.abs(y), 1e-300)
            x = y
            lam, res = _rayleigh(Q, x)
            history.append(res)
            if res <= target:
                return x, lam, res, it, history
        else:
            continue
        if rq_shift:
            rq_failures += 1
        elif np.all(np.isfinite(y)):
            # round-off pushed sigma to the Perron root; back off
            delta *= 100.0
    raise ConvergenceError(f"eigen-solver did not converge (residual {res:.3e}, target {target:.3e})",
                           residual=res, history=history)


def principal_eigenpair(gen: SparseGenerator, f=0.0, *, tol: float = DEFAULT_TOL,
                        max_iter: int = DEFAULT_MAX_ITER, accelerate: bool = True,
                        side: str = "both", warmup: int = 2000) -> SpectralSolution:
    """Principal eigenvalue and eigenvectors of ``L_h + diag(f)``.

    Parameters
    ----------
    gen : SparseGenerator
    f : array, ScalarField, callable or float
        Tilt sampled on the mesh.
    tol : float
        Relative tolerance on ``||Q h - lambda h||_inf / scale``.
    side : {"both", "right", "left"}
        Which eigenvectors to compute.
    accelerate : bool
        Use shifted inverse iteration after the power-iteration warm-up.

    Raises
    ------
    ConvergenceError
        When the residual target is not met within ``max_iter``.
    PositivityViolationError
        When an eigenvector has a nonpositive entry.
    """
    fv = sample(gen.mesh, f)
    if not np.all(np.isfinite(fv)):
        raise ValueError("tilt must be finite on the mesh")
    # Solve for the tilt shifted to min 0 so that lambda(f + c) = lambda(f) + c
    # holds up to round-off in the final sum.
    base = float(fv.min())
    fv = fv - base
    Q = (gen.matrix + sp.diags(fv)).tocsr()
    diag = Q.diagonal()
    shift = float(np.max(np.abs(diag)) + fv.max() - fv.min())
    scale = float(max(np.max(np.abs(gen.matrix.diagonal())), np.max(np.abs(fv)), 1.0))
    upper = float(fv.max()) + 1e-12 * scale
    right = left = None
    res = lres = float("nan")
    iters = 0
    history = []
    lam = float("nan")
    if np.ptp(fv) == 0.0:
        n = gen.size
        right = np.ones(n) if side in ("both", "right") else None
        lam = 0.0
        res = float(np.max(np.abs(gen.matrix @ np.ones(n)))) if right is not None else float("nan")
        if side in ("both", "left"):
            left, lam_l, lres, it_l, hist_l = _perron_vector(
                (gen.matrix.T).tocsr(), shift, scale, upper, tol, max_iter, accelerate, warmup)
            left = left / left.sum()
            iters += it_l
            history += hist_l
    else:
        if side in ("both", "right"):
            right, lam, res, iters, history = _perron_vector(Q, shift, scale, upper, tol, max_iter,
                                                             accelerate, warmup)
        if side in ("both", "left"):
            QT = Q.T.tocsr()
            left, lam_l, lres, it_l, hist_l = _perron_vector(QT, shift, scale, upper, tol, max_iter,
                                                             accelerate, warmup)
            left = left / left.sum()
            iters += it_l
            if side == "left":
                lam = lam_l
                history = hist_l
    lam = lam + base
    fv = fv + base
    for name, vec in (("right", right), ("left", left)):
        if vec is not None and not np.all(vec > 0):
            raise PositivityViolationError(
                f"{name} eigenvector has {int(np.sum(vec <= 0))} nonpositive entries")
    pw = float("nan")
    if right is not None:
        interior = gen.mesh.interior_mask() & (right > 1e-200)
        if interior.any():
            pw = float(np.max(np.abs((Q @ right)[interior] / right[interior] - (lam - base))))
    return SpectralSolution(float(lam), right, left, float(res), float(lres), int(iters), scale, pw, history)


def doob_transform(gen: SparseGenerator, f, sol: SpectralSolution) -> SparseGenerator:
    """``L^h = H^{-1} (L_h + diag f - lambda I) H`` with ``H = diag(h)``.

    The diagonal is reset to minus the off-diagonal row sums so that rows sum to
    zero exactly; the size of that correction is stored in
    ``diagnostics["row_sum_defect"]``.
    """
    if sol.right is None:
        raise ValueError("the right eigenvector is required")
    h = sol.right
    if not np.all(h > 0):
        raise PositivityViolationError("right eigenvector is not strictly positive")
    fv = sample(gen.mesh, f)
    Q = gen.matrix + sp.diags(fv - sol.eigenvalue)
    Lh = (sp.diags(1.0 / h) @ Q @ sp.diags(h)).tocsr()
    raw = np.asarray(Lh.sum(axis=1)).ravel()
    off = (Lh - sp.diags(Lh.diagonal())).tocsr()
    off.eliminate_zeros()
    out = (off - sp.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()
    out.sort_indices()
    doob = SparseGenerator(out, gen.mesh, f"doob[{gen.model_name}]", gen.scheme, gen.model)
    doob.diagnostics["row_sum_defect"] = float(np.max(np.abs(raw)) / max(gen.scale, 1.0))
    return doob


def invariant_measure(gen: SparseGenerator, *, tol: float = DEFAULT_TOL,
                      max_iter: int = DEFAULT_MAX_ITER) -> Array:
    """Left Perron vector of ``L_h`` normalized to a probability vector.

    The eigen-solver result is polished by inverse iteration on
    ``delta I - L^T`` until the change is small relative to every entry, so
    that tail values far below the absolute tolerance stay accurate (they
    enter ``L^*`` through ``mu^-1 L^T mu``).
    """
    sol = principal_eigenpair(gen, 0.0, tol=tol, max_iter=max_iter, side="left")
    m = np.maximum(sol.left, 1e-300)
    L = gen.matrix
    N = L.shape[0]
    lu = spla.splu((1e-9 * gen.scale * sp.eye(N) - L.T).tocsc())
    for _ in range(10):
        new = lu.solve(m)
        new /= new.sum()
        if np.any(new <= 0):
            break
        change = float(np.max(np.abs(new - m) / new))
        m = new
        if change < 1e-12:
            break
    return m / m.sum()


@dataclass(frozen=True)
class DecayFit:
    """Fit ``d_W(nu_t, mu) ~ C exp(-c t)``."""

    rate: float
    prefactor: float
    times: tuple
    distances: tuple
    decaying: bool


def ergodicity_decay(gen: SparseGenerator, W, nu0, times: Sequence[float], *, dt: float = 0.01,
                     mu: Optional[Array] = None) -> DecayFit:
    """Weighted total-variation decay ``sum W |nu_t - mu|`` under implicit Euler.

    A nonpositive fitted rate is reported through ``decaying = False``.
    """
    Wv = sample(gen.mesh, W)
    if np.min(Wv) < 1.0 - 1e-12:
        raise ValueError("W must be >= 1 on the mesh")
    nu = check_measure_nonneg(nu0, gen.size)
    if mu is None:
        mu = invariant_measure(gen)
    times = np.asarray(sorted(float(t) for t in times))
    N = gen.size
    lu = spla.splu((sp.identity(N, format="csc") - dt * gen.matrix.T).tocsc())
    t = 0.0
    dists = []
    for target in times:
        steps = int(round((target - t) / dt))
        for _ in range(steps):
            nu = lu.solve(nu)
        t += steps * dt
        dists.append(float(np.sum(Wv * np.abs(nu - mu))))
    d = np.asarray(dists)
    if np.all(d <= 1e-300):
        return DecayFit(float("inf"), 0.0, tuple(times), tuple(dists), True)
    mask = d > 1e-300
    if mask.sum() < 2:
        return DecayFit(float("nan"), float("nan"), tuple(times), tuple(dists), False)
    res = stats.linregress(times[mask], np.log(d[mask]))
    rate = float(-res.slope)
    return DecayFit(rate, float(np.exp(res.intercept)), tuple(times), tuple(dists), bool(rate > 0))


def check_measure_nonneg(nu, size: int) -> Array:
    nu = np.asarray(nu, dtype=float).ravel()
    if nu.size != size or np.any(nu < 0) or not np.isclose(nu.sum(), 1.0):
        raise ValueError("initial law must be a probability vector on the mesh")
    return nu.copy()


def box_doubling_sensitivity(model, f, mesh: Mesh, *, scheme: Optional[str] = None,
                             tol: float = DEFAULT_TOL) -> dict:
    """``|lambda(doubled box) - lambda(box)|`` at equal spacing.

    ``f`` must be evaluable on arbitrary points (field or callable).
    """
    out = {}
    for key, m in (("box", mesh), ("doubled", mesh.doubled())):
        gen = assemble_generator(model, m, scheme)
        out[key] = principal_eigenpair(gen, sample(m, f), tol=tol, side="right").eigenvalue
    out["sensitivity"] = abs(out["doubled"] - out["box"])
    return out


__all__ += ["check_measure_nonneg", "check_measure"]
