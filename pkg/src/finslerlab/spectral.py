r"""Discrete horizontal Laplacian: assembly, spectra, Green's functions.

The operator is assembled per direction block ("frozen-direction" mode: each
direction decoupled, exact for direction-independent fields and N == 0
specs) from the quadratic form

    E(u, v) = 1/2 sum_p w_p [ (D+ u)^T C_p (D+ v) + (D- u)^T C_p (D- v) ],

with C_p = rho_p g^{ij}(x_p, y_d), w_p the cell volume times direction
weight, and D+/- forward/backward periodic differences.  Averaging the two
one-sided forms makes the scheme second-order for variable coefficients (the
induced flux uses arithmetically averaged edge coefficients) while keeping,
unconditionally and by construction:

* symmetry of A,
* positive semi-definiteness (each summand is an SPD quadratic form),
* constants as the only kernel per block,
* exact discrete integration by parts <A u, v> = E(u, v).

The generalized eigenproblem is A v = lambda M v with the measure
M = diag(rho * cellvol * w_d).  Dense solves below 3000 nodes per block;
shift-invert ARPACK with AMG-preconditioned CG inner solves above.  The
Green matrix is the measure-weighted pseudo-inverse, symmetric with
measure-mean-zero rows (Aubin's normalization).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConstantField,
    ConvergenceFailure,
    GreenUnavailable,
    RankDeficiency,
    StencilOverflow,
)
from .mesh import SampledField, SphereBundleMesh, geometry_fields
from .policy import DEFAULT_POLICY

_DENSE_LIMIT = 3000
_GREEN_DENSE_LIMIT = 4000


def _shift_matrix(resolution, axis):
    """Periodic shift (S u)_p = u_{p + e_axis} as a sparse permutation."""
    n = int(np.prod(resolution))
    idx = np.arange(n).reshape(resolution)
    target = np.roll(idx, -1, axis=axis).ravel()
    return sp.csr_matrix((np.ones(n), (np.arange(n), target)), shape=(n, n))


def _block_matrix(mesh: SphereBundleMesh, C):
    """One direction block from per-node SPD coefficient matrices C (N,3,3)."""
    res = mesh.resolution
    h = mesh.spacings
    n = mesh.n_nodes
    I = sp.identity(n, format="csr")
    Df = [(
        _shift_matrix(res, ax) - I
    ) / h[ax] for ax in range(3)]
    Db = [(
        I - _shift_matrix(res, ax).T
    ) / h[ax] for ax in range(3)]
    A = None
    for i in range(3):
        for j in range(3):
            diag = sp.diags(C[:, i, j])
            term = Df[i].T @ diag @ Df[j] + Db[i].T @ diag @ Db[j]
            A = term if A is None else A + term
    A = 0.25 * (A + A.T)  # 1/2 from the form, 1/2 from explicit symmetrization
    return A.tocsr()


@dataclass
class DiscreteOperator:
    """Frozen-direction discrete horizontal Laplacian over a mesh."""

    mesh: SphereBundleMesh
    blocks: list                      # csr per distinct direction block
    block_of_direction: np.ndarray    # direction -> index into blocks
    measure: np.ndarray               # (N, D) quadrature weights rho*cellvol*w
    mode: str = "frozen"
    warnings: list = field(default_factory=list)

    @property
    def n_nodes(self):
        return self.mesh.n_nodes

    @property
    def n_directions(self):
        return self.mesh.n_directions

    @property
    def dimension(self):
        return self.n_nodes * self.n_directions

    def block(self, d=0):
        """Matrix of direction block d, including its direction weight."""
        return self.blocks[self.block_of_direction[d]] * self.mesh.weights[d]

    def block_measure(self, d=0):
        return self.measure[:, d]

    def full_matrix(self):
        return sp.block_diag([self.block(d) for d in range(self.n_directions)], format="csr")

    def apply(self, values):
        """Discrete Delta-hat u = M^{-1} A u per (node, direction)."""
        values = np.asarray(values, dtype=float)
        vv = values if values.ndim == 2 else values[:, None]
        out = np.empty_like(vv, dtype=float)
        for d in range(vv.shape[1]):
            out[:, d] = self.block(d) @ vv[:, d] / self.block_measure(d)
        return out.reshape(values.shape)

    def energy(self, u, v):
        """Weak form <A u, v> = (nabla-hat u, nabla-hat v)_eta, block-summed."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        uu = u if u.ndim == 2 else u[:, None]
        vv = v if v.ndim == 2 else v[:, None]
        total = 0.0
        for d in range(uu.shape[1]):
            total += float(vv[:, d] @ (self.block(d) @ uu[:, d]))
        return total


def assemble(spec, mesh: SphereBundleMesh, coupling="frozen", policy=DEFAULT_POLICY) -> DiscreteOperator:
    """Assemble the discrete operator; frozen-direction blocks by default.

    ``coupling="coupled"`` (direction-derivative stencils for the N-coupling)
    is unavailable on scattered direction sets: it raises StencilOverflow
    unless ``coupling="frozen_fallback"`` is passed, which builds the frozen
    operator and records a warning.
    """
    warnings = []
    if coupling == "coupled":
        raise StencilOverflow(
            "N-coupled assembly needs direction-derivative stencils, which the "
            "mesh's direction set does not provide; pass coupling='frozen_fallback' "
            "to build the frozen-direction operator instead"
        )
    if coupling == "frozen_fallback":
        warnings.append("coupled assembly unavailable; built frozen-direction operator")
    elif coupling != "frozen":
        raise StencilOverflow(f"unknown coupling mode {coupling!r}")

    geo = geometry_fields(spec, mesh, policy)
    measure = mesh.measure()
    if spec.direction_independent_geometry:
        C = geo["g_inv"][:, 0] * (mesh.density[:, 0] * mesh.cellvol)[:, None, None]
        blocks = [_block_matrix(mesh, C)]
        block_of = np.zeros(mesh.n_directions, dtype=int)
    else:
        blocks = []
        block_of = np.arange(mesh.n_directions)
        for d in range(mesh.n_directions):
            C = geo["g_inv"][:, d] * (mesh.density[:, d] * mesh.cellvol)[:, None, None]
            blocks.append(_block_matrix(mesh, C))
    op = DiscreteOperator(mesh=mesh, blocks=blocks, block_of_direction=block_of,
                          measure=measure, warnings=warnings)
    if mesh.n_directions > 1:
        op.warnings.append(
            "frozen-direction mode: each direction block keeps its own constant "
            "kernel; merged spectra carry one zero per direction"
        )
    return op


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    method: str
    residuals: np.ndarray
    block_multiplicity: int = 1


def _lambda_scale(A, m):
    """Rayleigh quotient of the first Fourier mode: a robust magnitude seed."""
    n = A.shape[0]
    t = np.sin(2 * np.pi * np.arange(n) / n)
    q = float(t @ (A @ t)) / max(float((t * m) @ t), 1e-300)
    return max(q, 1e-8)


def _block_spectrum(A, m, k, policy, want_vectors=False):
    """First k eigenpairs of A v = lambda diag(m) v, ascending."""
    n = A.shape[0]
    if n <= _DENSE_LIMIT:
        d = 1.0 / np.sqrt(m)
        At = (A.multiply(d[:, None])).multiply(d[None, :]).toarray()
        At = 0.5 * (At + At.T)
        w, V = sla.eigh(At)
        w, V = w[:k], V[:, :k]
        V = V * d[:, None]
        res = np.linalg.norm(
            A @ V - (m[:, None] * V) * w[None, :], axis=0
        ) / np.linalg.norm(V, axis=0)
        return w, (V if want_vectors else None), res, "dense"
    # iterative shift-invert with AMG-preconditioned CG inner solves; the
    # diagonal measure turns the pencil into an equivalent standard problem
    import pyamg

    d = 1.0 / np.sqrt(m)
    At = (A.multiply(d[:, None])).multiply(d[None, :]).tocsr()
    At = (0.5 * (At + At.T)).tocsr()
    sigma = -0.25 * _lambda_scale(A, m)
    shifted = (At - sigma * sp.identity(n, format="csr")).tocsr()
    ml = pyamg.smoothed_aggregation_solver(shifted, max_coarse=60)
    prec = ml.aspreconditioner()

    def solve(b):
        x, info = spla.cg(shifted, b, rtol=1e-12, atol=0.0, M=prec, maxiter=400)
        if info != 0:
            raise ConvergenceFailure(
                "inner CG failed during shift-invert", {"info": info}
            )
        return x

    OPinv = spla.LinearOperator((n, n), matvec=solve)
    rng = np.random.default_rng(policy.eig_seed)
    v0 = rng.standard_normal(n)
    try:
        w, V = spla.eigsh(At, k=k, sigma=sigma, which="LM", OPinv=OPinv, v0=v0)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceFailure(
            "ARPACK did not converge", {"converged": len(getattr(exc, "eigenvalues", []))}
        ) from exc
    order = np.argsort(w)
    w, V = w[order], V[:, order]
    V = V * d[:, None]
    res = np.linalg.norm(A @ V - (m[:, None] * V) * w[None, :], axis=0) / np.linalg.norm(V, axis=0)
    return w, (V if want_vectors else None), res, "iterative"


def spectrum(op: DiscreteOperator, m: int, policy=DEFAULT_POLICY) -> Spectrum:
    """First m eigenvalues of the operator, ascending, with residual norms.

    Distinct blocks are solved separately and merged; for uniform blocks the
    merged spectrum is the block spectrum with multiplicity = #directions
    (reported via ``block_multiplicity``, eigenvalue list NOT inflated).
    """
    if m > op.dimension:
        m = op.dimension
    uniform = len(op.blocks) == 1
    if uniform:
        A = op.block(0)
        mvec = op.block_measure(0)
        k = min(m, op.n_nodes - 1)
        w, _, res, method = _block_spectrum(A, mvec, k, policy)
        scale = max(float(np.abs(w).max()), 1.0)
        bad = res > policy.eig_residual_rtol * max(scale, 1.0)
        if np.any(bad):
            raise ConvergenceFailure(
                f"eigenpair residual {float(res.max()):.3e} beyond tolerance",
                {"residuals": res.tolist()},
            )
        return Spectrum(w, method, res, block_multiplicity=op.n_directions)
    allw, allres = [], []
    method = ""
    for d in range(op.n_directions):
        w, _, res, method = _block_spectrum(op.block(d), op.block_measure(d), min(m, op.n_nodes - 1), policy)
        allw.append(w)
        allres.append(res)
    w = np.concatenate(allw)
    res = np.concatenate(allres)
    order = np.argsort(w)[:m]
    return Spectrum(w[order], method, res[order], block_multiplicity=1)


def lambda1(op: DiscreteOperator, policy=DEFAULT_POLICY, zero_tol=None):
    """First nonzero eigenvalue (above the constant-kernel cluster)."""
    spec = spectrum(op, min(12, op.n_nodes - 1), policy)
    w = spec.eigenvalues
    scale = max(float(np.abs(w).max()), 1e-30)
    if zero_tol is None:
        zero_tol = 1e-8 * scale
    nz = w[w > zero_tol]
    if nz.size == 0:
        raise RankDeficiency("no nonzero eigenvalue among the computed leading cluster")
    return float(nz[0])


def rayleigh_lambda1(op: DiscreteOperator, psi, policy=DEFAULT_POLICY):
    """Rayleigh quotient with the mean-correction denominator.

    quotient = E(psi, psi) / ( <psi,psi>_eta - vol^{-1} <psi,1>_eta^2 );
    always >= lambda1 up to solver tolerance by Courant-Fischer on the same
    matrices.
    """
    vals = psi.values if isinstance(psi, SampledField) else np.asarray(psi, dtype=float)
    if vals.ndim == 1:
        vals = np.repeat(vals[:, None], op.n_directions, axis=1)
    msr = op.measure
    vol = float(msr.sum())
    num = op.energy(vals, vals)
    mean_term = float((vals * msr).sum()) ** 2 / vol
    den = float((vals * vals * msr).sum()) - mean_term
    norm2 = float((vals * vals * msr).sum())
    if den <= 1e-14 * max(norm2, 1e-300):
        raise ConstantField("Rayleigh denominator vanishes: field is constant")
    return num / den


@dataclass
class IsospectralReport:
    eigenvalues_a: np.ndarray
    eigenvalues_b: np.ndarray
    max_rel_gap: float
    tol: float
    verdict: bool
    m: int
    note: str = "discrete isospectrality up to tol (no continuum claim)"


def isospectral_compare(spec_a, spec_b, resolution, direction_rule, m, tol,
                        policy=DEFAULT_POLICY) -> IsospectralReport:
    """Compare first m discrete eigenvalues of two specs on one mesh topology."""
    from .mesh import build_mesh

    mesh_a = build_mesh(spec_a, resolution, direction_rule, policy)
    mesh_b = build_mesh(spec_b, resolution, direction_rule, policy)
    op_a = assemble(spec_a, mesh_a, policy=policy)
    op_b = assemble(spec_b, mesh_b, policy=policy)
    wa = spectrum(op_a, m, policy).eigenvalues[:m]
    wb = spectrum(op_b, m, policy).eigenvalues[:m]
    k = min(len(wa), len(wb))
    scale = np.maximum(np.maximum(np.abs(wa[:k]), np.abs(wb[:k])), 1e-12)
    gaps = np.abs(wa[:k] - wb[:k]) / scale
    gap = float(gaps.max())
    return IsospectralReport(wa[:k], wb[:k], gap, tol, bool(gap <= tol), k)


# -- Green's function -----------------------------------------------------------


@dataclass
class GreenMatrix:
    """Dense symmetric mean-zero Green matrix of one direction block."""

    G: np.ndarray
    measure: np.ndarray
    direction: int
    convention: str = "mean-zero"


def green_function(op: DiscreteOperator, direction=0, policy=DEFAULT_POLICY) -> GreenMatrix:
    """Measure pseudo-inverse G = M^{-1/2} pinv(M^{-1/2} A M^{-1/2}) M^{-1/2}.

    Satisfies the reproduction identity u = mean_eta(u) + G M Delta-hat u,
    symmetry, and measure-mean-zero rows.  Dense path only; meshes beyond
    4000 nodes should use :func:`green_apply` (per-source iterative solves).
    """
    n = op.n_nodes
    if n > _GREEN_DENSE_LIMIT:
        raise GreenUnavailable(
            f"dense Green matrix limited to {_GREEN_DENSE_LIMIT} nodes (got {n}); "
            "use green_apply for per-source solves"
        )
    A = op.block(direction).toarray()
    mvec = op.block_measure(direction)
    d = 1.0 / np.sqrt(mvec)
    At = d[:, None] * A * d[None, :]
    At = 0.5 * (At + At.T)
    w, V = sla.eigh(At)
    scale = float(np.abs(w).max())
    null = np.abs(w) <= 1e-10 * scale
    if int(null.sum()) != 1:
        raise RankDeficiency(
            f"operator kernel dimension {int(null.sum())} != 1 on the block"
        )
    winv = np.where(null, 0.0, 1.0 / np.where(null, 1.0, w))
    G = (V * winv[None, :]) @ V.T
    G = d[:, None] * G * d[None, :]
    G = 0.5 * (G + G.T)
    return GreenMatrix(G=G, measure=mvec, direction=direction)


def green_apply(op: DiscreteOperator, f, direction=0, policy=DEFAULT_POLICY, rtol=1e-12):
    """Apply the Green operator to one source iteratively: solves A w = M f0
    with f0 the measure-mean-corrected source, returns the mean-zero w."""
    import pyamg

    A = op.block(direction).tocsr()
    mvec = op.block_measure(direction)
    f = np.asarray(f, dtype=float)
    vol = float(mvec.sum())
    f0 = f - float((f * mvec).sum()) / vol
    b = mvec * f0
    ml = pyamg.smoothed_aggregation_solver(A + sp.diags(np.full(A.shape[0], 1e-12 * abs(A).sum() / A.shape[0])), max_coarse=60)
    prec = ml.aspreconditioner()
    x0 = np.zeros_like(b)
    x, info = spla.cg(A, b, x0=x0, rtol=rtol, atol=0.0, M=prec, maxiter=2000)
    if info != 0:
        raise ConvergenceFailure("Green-apply CG failed", {"info": info})
    x = x - float((x * mvec).sum()) / vol
    return x


def green_reproduce(G: GreenMatrix, phi, op: DiscreteOperator, direction=0):
    """Right side of the reproduction identity for comparison with phi:
    mean_eta(phi) + G M Delta-hat(phi)."""
    vals = phi.values[:, direction] if isinstance(phi, SampledField) else np.asarray(phi, dtype=float)
    mvec = G.measure
    vol = float(mvec.sum())
    mean = float((vals * mvec).sum()) / vol
    lap = op.block(direction) @ vals / mvec
    return mean + G.G @ (mvec * lap)


# -- exports --------------------------------------------------------------------


def export_operator_coo(op: DiscreteOperator, path, direction=0):
    """Coordinate-list text format: one 'row col value' line per entry."""
    A = op.block(direction).tocoo()
    with open(path, "w") as fh:
        fh.write(f"# discrete horizontal Laplacian block, direction {direction}\n")
        fh.write(f"# shape {A.shape[0]} {A.shape[1]} nnz {A.nnz}\n")
        for r, c, v in zip(A.row, A.col, A.data):
            fh.write(f"{r} {c} {v:.17g}\n")


def spectrum_csv_rows(spec: Spectrum):
    return [
        {"index": i, "eigenvalue": float(w), "residual": float(r)}
        for i, (w, r) in enumerate(zip(spec.eigenvalues, spec.residuals))
    ]
