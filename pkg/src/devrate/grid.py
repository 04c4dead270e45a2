"""Tensor meshes and discrete generators.

The generator is assembled edge by edge on a tensor grid.  Each edge between
neighbouring nodes ``x`` and ``y = x + h e_i`` contributes one forward and one
backward jump rate, so rows sum to zero by construction and truncated
boundaries are reflecting (no edge leaves the box).  Three schemes are
available:

``gibbs``
    Structure-preserving rates for models with a known reference density
    ``pi = exp(-U)``.  The diffusive part uses the square-root approximation
    ``c = S_ii(mid) exp(-(U_x + U_y)/2) / h^2``, which is exactly reversible for
    ``pi``.  The remaining drift ``F = b + S grad U`` enters as an antisymmetric
    flux ``j = exp(-U(mid)) F_i(mid) / (2h)``, and extra numerical diffusion
    ``max(0, |j| - c)`` keeps all rates nonnegative.  Second order where the
    diffusion dominates; default whenever ``U`` is available.
``hybrid``
    Central differences where the cell Peclet number ``|b_i| h / (2 S_ii)`` is at
    most one, first-order upwind elsewhere.
``upwind``
    First-order upwind drift with central diffusion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import MeasureError, MeshError, ParameterError, UnsupportedDiffusionError
from .model import DiffusionModel, ScalarField

Array = np.ndarray

__all__ = [
    "Mesh",
    "SparseGenerator",
    "GeneratorSplit",
    "DriftCheck",
    "SCHEMES",
    "assemble_generator",
    "default_scheme",
    "sample",
    "split_generator",
    "witten_similarity",
    "gradient_operator",
    "feynman_kac_drift_check",
    "check_measure",
]

SCHEMES = ("gibbs", "hybrid", "upwind")
MAX_NODES = 4_000_000


@dataclass(frozen=True)
class Mesh:
    """Tensor grid on a box.

    Truncated axes hold ``n_i`` nodes from ``lo_i`` to ``hi_i`` inclusive.
    Periodic axes hold ``n_i`` nodes ``lo_i + k h_i`` with ``h_i = (hi_i - lo_i)/n_i``.
    Nodes are ordered C-style (last axis fastest).
    """

    lo: tuple
    hi: tuple
    n: tuple
    periodic: tuple = ()

    def __post_init__(self):
        d = len(self.lo)
        if not (len(self.hi) == len(self.n) == d) or d == 0:
            raise MeshError("lo, hi and n must have the same positive length")
        per = tuple(self.periodic) if self.periodic else (False,) * d
        if len(per) != d:
            raise MeshError("periodic flags must match the dimension")
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))
        object.__setattr__(self, "periodic", tuple(bool(p) for p in per))
        for a, b, m in zip(self.lo, self.hi, self.n):
            if not b > a:
                raise MeshError(f"empty axis [{a}, {b}]")
            if m < 8:
                raise MeshError(f"mesh too coarse: {m} nodes on an axis, need at least 8")
        if self.size > MAX_NODES:
            raise MeshError(f"{self.size} nodes exceed the budget of {MAX_NODES}")

    @classmethod
    def box(cls, lo: Union[float, Sequence[float]], hi: Union[float, Sequence[float]],
            n: Union[int, Sequence[int]], dim: int = 1,
            periodic: Union[bool, Sequence[bool]] = False) -> "Mesh":
        """Mesh with scalar or per-axis bounds and node counts."""
        def vec(v, cast):
            if np.ndim(v) == 0:
                return tuple(cast(v) for _ in range(dim))
            return tuple(cast(x) for x in v)
        return cls(vec(lo, float), vec(hi, float), vec(n, int), vec(periodic, bool))

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def h(self) -> Array:
        return np.array([(b - a) / (m if p else m - 1)
                         for a, b, m, p in zip(self.lo, self.hi, self.n, self.periodic)])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def axes(self) -> list[Array]:
        return [a + np.arange(m) * hh for a, m, hh in zip(self.lo, self.n, self.h)]

    def points(self) -> Array:
        """All nodes as an ``(N, d)`` array."""
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def ravel(self, multi) -> Array:
        return np.ravel_multi_index(tuple(np.asarray(multi).T), self.n)

    def unravel(self, idx) -> Array:
        return np.stack(np.unravel_index(np.asarray(idx), self.n), axis=-1)

    def reshape(self, values: Array) -> Array:
        return np.asarray(values).reshape(self.n)

    def boundary_mask(self) -> Array:
        """True on nodes lying on a truncated face of the box."""
        mask = np.zeros(self.n, dtype=bool)
        for i, (m, p) in enumerate(zip(self.n, self.periodic)):
            if p:
                continue
            sl = [slice(None)] * self.dim
            sl[i] = 0
            mask[tuple(sl)] = True
            sl[i] = m - 1
            mask[tuple(sl)] = True
        return mask.ravel()

    def interior_mask(self) -> Array:
        return ~self.boundary_mask()

    def nearest(self, x) -> int:
        """Linear index of the node closest to ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        k = np.rint((x - np.array(self.lo)) / self.h).astype(int)
        k = np.clip(k, 0, np.array(self.n) - 1)
        return int(np.ravel_multi_index(tuple(k), self.n))

    def edges(self, axis: int) -> tuple[Array, Array]:
        """Linear indices ``(src, dst)`` of neighbour pairs ``dst = src + e_axis``."""
        idx = np.arange(self.size).reshape(self.n)
        m = self.n[axis]
        src = np.take(idx, np.arange(m - 1), axis=axis).ravel()
        dst = np.take(idx, np.arange(1, m), axis=axis).ravel()
        if self.periodic[axis]:
            src = np.concatenate([src, np.take(idx, [m - 1], axis=axis).ravel()])
            dst = np.concatenate([dst, np.take(idx, [0], axis=axis).ravel()])
        return src, dst

    def edge_midpoints(self, axis: int, src: Array) -> Array:
        """Midpoints of the edges starting at ``src`` along ``axis``."""
        pts = self.points()[src].copy()
        pts[:, axis] += 0.5 * self.h[axis]
        return pts

    def doubled(self) -> "Mesh":
        """Box of twice the size with the same spacing."""
        if any(self.periodic):
            raise MeshError("periodic axes cannot be doubled")
        lo = tuple(2 * a for a in self.lo)
        hi = tuple(2 * b for b in self.hi)
        n = tuple(2 * (m - 1) + 1 for m in self.n)
        return Mesh(lo, hi, n, self.periodic)

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "n": list(self.n),
                "periodic": list(self.periodic)}


def sample(mesh: Mesh, f: Union[ScalarField, Callable, Array, float]) -> Array:
    """Values of ``f`` at the mesh nodes."""
    if isinstance(f, ScalarField):
        return np.asarray(f.value(mesh.points()), dtype=float)
    if callable(f):
        return np.asarray(f(mesh.points()), dtype=float).reshape(mesh.size)
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0:
        return np.full(mesh.size, float(arr))
    arr = arr.reshape(-1)
    if arr.size != mesh.size:
        raise ParameterError(f"sampled field has {arr.size} values, mesh has {mesh.size} nodes")
    return arr


@dataclass(eq=False)
class SparseGenerator:
    """Discrete Markov generator ``L_h`` on a mesh (CSR, rows sum to zero)."""

    matrix: sp.csr_matrix
    mesh: Mesh
    model_name: str = "custom"
    scheme: str = "gibbs"
    model: Optional[DiffusionModel] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def scale(self) -> float:
        """Largest exit rate, the natural magnitude of the operator."""
        return float(np.max(np.abs(self.matrix.diagonal())))

    def __matmul__(self, x):
        return self.matrix @ x

    def row_sums(self) -> Array:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def min_offdiagonal(self) -> float:
        off = self.matrix - sp.diags(self.matrix.diagonal())
        off = off.tocoo()
        return float(off.data.min()) if off.nnz else 0.0

    def check(self, tol: float = 1e-12) -> dict:
        """Row-sum and sign diagnostics; ``valid`` is the combined verdict."""
        rs = self.row_sums()
        rel = float(np.max(np.abs(rs)) / max(self.scale, 1.0))
        mo = self.min_offdiagonal()
        return {"max_row_sum": float(np.max(np.abs(rs))), "relative_row_sum": rel,
                "min_offdiagonal": mo, "valid": rel <= tol and mo >= 0.0}

    def write_coo(self, path) -> None:
        """Write ``row col value`` lines for debugging."""
        coo = self.matrix.tocoo()
        np.savetxt(path, np.column_stack([coo.row, coo.col, coo.data]),
                   fmt=["%d", "%d", "%.17g"], header=f"{self.size} {self.size} {coo.nnz}")


def default_scheme(model: DiffusionModel) -> str:
    U = model.reference_potential
    return "gibbs" if U is not None and U.grad is not None else "hybrid"


def _diagonal_S(model: DiffusionModel, X: Array) -> Array:
    S = model.diffusion_matrix(X)
    if S.ndim == 2:
        S = S[None]
    off = S - np.einsum("nii->ni", S)[:, :, None] * np.eye(S.shape[1])[None]
    scale = float(np.max(np.abs(S))) + 1.0
    if np.max(np.abs(off)) > 1e-12 * scale:
        raise UnsupportedDiffusionError("diffusion matrix has cross terms; only axis-aligned S is supported")
    diag = np.einsum("nii->ni", S)
    if np.min(diag) < -1e-14 * scale:
        raise UnsupportedDiffusionError("diffusion matrix has negative diagonal entries")
    diag = np.maximum(diag, 0.0)
    if diag.shape[0] == 1 and X.shape[0] != 1:
        diag = np.broadcast_to(diag, (X.shape[0], diag.shape[1]))
    return diag


def assemble_generator(model: DiffusionModel, mesh: Mesh, scheme: Optional[str] = None) -> SparseGenerator:
    """Assemble the discrete generator of ``model`` on ``mesh``.

    Parameters
    ----------
    scheme : {"gibbs", "hybrid", "upwind"}, optional
        Discretization; defaults to ``gibbs`` when the model exposes a reference
        potential and to ``hybrid`` otherwise.

    Raises
    ------
    UnsupportedDiffusionError
        If S has off-diagonal entries.
    MeshError
        On dimension mismatch (coarseness is checked when the mesh is built).
    """
    if mesh.dim != model.dim:
        raise MeshError(f"mesh dimension {mesh.dim} differs from model dimension {model.dim}")
    scheme = scheme or default_scheme(model)
    if scheme not in SCHEMES:
        raise ParameterError(f"unknown scheme '{scheme}'; choose from {SCHEMES}")
    X = mesh.points()
    N = mesh.size
    h = mesh.h
    Snode = _diagonal_S(model, X)
    b = model.b(X) if N > 1 else model.b(X).reshape(1, -1)
    if scheme == "gibbs":
        U = model.reference_potential
        if U is None or U.grad is None:
            raise ParameterError("the gibbs scheme needs a reference potential with gradient")
        Unode = U.value(X)
    rows, cols, vals = [], [], []
    for i in range(mesh.dim):
        src, dst = mesh.edges(i)
        hi = h[i]
        if scheme == "gibbs":
            mid = mesh.edge_midpoints(i, src)
            Smid = _diagonal_S(model, mid)[:, i]
            F = model.b(mid)[:, i] + Smid * U.grad(mid)[:, i]
            if model.is_reversible:
                F = np.zeros_like(F)
            Umid = U.value(mid)
            Us, Ud = Unode[src], Unode[dst]
            A_f = Smid * np.exp(0.5 * (Us - Ud)) / hi ** 2
            A_b = Smid * np.exp(0.5 * (Ud - Us)) / hi ** 2
            J_f = np.exp(Us - Umid) * F / (2.0 * hi)
            J_b = np.exp(Ud - Umid) * F / (2.0 * hi)
            fwd = np.maximum(A_f, np.abs(J_f)) + J_f
            bwd = np.maximum(A_b, np.abs(J_b)) - J_b
        else:
            Ss, Sd = Snode[src, i], Snode[dst, i]
            bs, bd = b[src, i], b[dst, i]
            fwd_up = Ss / hi ** 2 + np.maximum(bs, 0.0) / hi
            bwd_up = Sd / hi ** 2 + np.maximum(-bd, 0.0) / hi
            if scheme == "upwind":
                fwd, bwd = fwd_up, bwd_up
            else:
                fwd_c = Ss / hi ** 2 + bs / (2.0 * hi)
                bwd_c = Sd / hi ** 2 - bd / (2.0 * hi)
                fwd = np.where(np.abs(bs) * hi <= 2.0 * Ss, fwd_c, fwd_up)
                bwd = np.where(np.abs(bd) * hi <= 2.0 * Sd, bwd_c, bwd_up)
        rows += [src, dst]
        cols += [dst, src]
        vals += [fwd, bwd]
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    if not np.all(np.isfinite(v)):
        raise ParameterError("non-finite jump rates; the box is probably too large for the potential")
    off = sp.csr_matrix((v, (r, c)), shape=(N, N))
    off.eliminate_zeros()
    out = np.asarray(off.sum(axis=1)).ravel()
    L = (off - sp.diags(out)).tocsr()
    L.sort_indices()
    gen = SparseGenerator(L, mesh, model.name, scheme, model)
    gen.diagnostics["min_rate"] = float(v.min()) if v.size else 0.0
    return gen


def check_measure(mu: Array, size: Optional[int] = None) -> Array:
    mu = np.asarray(mu, dtype=float).ravel()
    if size is not None and mu.size != size:
        raise MeasureError(f"measure has {mu.size} entries, expected {size}")
    if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
        raise MeasureError("reference measure must be strictly positive")
    return mu


@dataclass(eq=False)
class GeneratorSplit:
    """``L = L_S + L_A`` relative to a reference measure ``mu``."""

    symmetric: sp.csr_matrix
    antisymmetric: sp.csr_matrix
    adjoint: sp.csr_matrix
    mu: Array

    @property
    def antisymmetric_ratio(self) -> float:
        """``max|L_A| / max|L|``."""
        la = np.max(np.abs(self.antisymmetric.data)) if self.antisymmetric.nnz else 0.0
        L = self.symmetric + self.antisymmetric
        return float(la / max(np.max(np.abs(L.data)), 1e-300))


def split_generator(gen: Union[SparseGenerator, sp.spmatrix], mu: Array) -> GeneratorSplit:
    """Split into parts self-adjoint and skew-adjoint in ``l^2(mu)``.

    With ``D = diag(mu)`` the adjoint is ``L* = D^{-1} L^T D``,
    ``L_S = (L + L*)/2`` and ``L_A = (L - L*)/2``.
    """
    L = gen.matrix if isinstance(gen, SparseGenerator) else sp.csr_matrix(gen)
    mu = check_measure(mu, L.shape[0])
    Lstar = (sp.diags(1.0 / mu) @ L.T @ sp.diags(mu)).tocsr()
    LS = (0.5 * (L + Lstar)).tocsr()
    LA = (0.5 * (L - Lstar)).tocsr()
    return GeneratorSplit(LS, LA, Lstar, mu)


def witten_similarity(gen: Union[SparseGenerator, sp.spmatrix], mu: Array) -> sp.csr_matrix:
    """``D^{1/2} L D^{-1/2}``, symmetric when ``L`` is ``mu``-reversible."""
    L = gen.matrix if isinstance(gen, SparseGenerator) else sp.csr_matrix(gen)
    mu = check_measure(mu, L.shape[0])
    s = np.sqrt(mu)
    return (sp.diags(s) @ L @ sp.diags(1.0 / s)).tocsr()


def gradient_operator(mesh: Mesh) -> tuple[sp.csr_matrix, Array, Array, Array]:
    """Edge-difference operator ``(G phi)_e = (phi_dst - phi_src) / h_axis``.

    Returns ``(G, axis, src, dst)`` with one entry per edge.
    """
    rows, cols, vals, axis, S, D = [], [], [], [], [], []
    offset = 0
    for i in range(mesh.dim):
        src, dst = mesh.edges(i)
        E = src.size
        e = np.arange(offset, offset + E)
        rows += [e, e]
        cols += [dst, src]
        vals += [np.full(E, 1.0 / mesh.h[i]), np.full(E, -1.0 / mesh.h[i])]
        axis.append(np.full(E, i))
        S.append(src)
        D.append(dst)
        offset += E
    G = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(offset, mesh.size))
    return G, np.concatenate(axis), np.concatenate(S), np.concatenate(D)


@dataclass(frozen=True)
class DriftCheck:
    """Outcome of ``P W <= exp(-a delta) W + c 1_K`` for one implicit step."""

    a: float
    c: float
    delta: float
    radius: float
    passed: bool


def feynman_kac_drift_check(gen: SparseGenerator, f: Array, W: Array, delta: float = 0.1,
                            radius: float = 3.0) -> DriftCheck:
    """One implicit-Euler step ``P = (I - delta (L + diag f))^{-1}`` applied to W.

    ``a`` is the largest rate with ``PW <= exp(-a delta) W`` outside the centred
    box of half-width ``radius``; ``c`` covers the excess inside it.
    """
    f = sample(gen.mesh, f)
    W = sample(gen.mesh, W)
    N = gen.size
    A = (sp.identity(N, format="csc") - delta * (gen.matrix + sp.diags(f))).tocsc()
    PW = spla.spsolve(A, W)
    X = gen.mesh.points()
    inside = np.all(np.abs(X) <= radius, axis=1)
    ratio = PW[~inside] / W[~inside]
    a = float(-np.log(np.max(ratio)) / delta) if ratio.size else float("inf")
    c = float(max(0.0, np.max(PW[inside] - np.exp(-a * delta) * W[inside]))) if inside.any() else 0.0
    return DriftCheck(a, c, delta, radius, bool(a > 0 and np.all(PW > 0)))
