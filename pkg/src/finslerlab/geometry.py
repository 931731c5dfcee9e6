r"""Pointwise Finslerian tensors from a metric spec, via forward-mode jets.

All quantities are read off one jet evaluation of F^2 around the query
point:

* fundamental tensor   g_ij = 1/2 d^2 F^2 / dy_i dy_j
* Cartan tensor        A_ijk = (F/2) dg_ij/dy_k
* geodesic spray       G^i  = 1/4 g^{il} [dg_jl/dx_k + dg_kl/dx_j - dg_jk/dx_l] y^j y^k
* nonlinear connection N^i_j = dG^i/dy_j
* Chern coefficients   Gamma^i_jk = d^2 G^i / dy_j dy_k, cross-checked
  against 1/2 g^{il} (delta g_jl/delta x_k + delta g_lk/delta x_j -
  delta g_jk/delta x_l) with delta/delta x = d/dx - N d/dy.

The spray/connection assembly works on the y-Taylor series of g and dg/dx
around the query direction, so N and Gamma are again plain coefficient
reads.  The hh-curvature needs one more derivative of Gamma in each slot;
that step uses Richardson-extrapolated central differences of the (jet
exact) Gamma map, which keeps one code path for every metric kind and is
accurate to ~1e-10 on smooth specs.

Everything is batched: ``x`` and ``y`` may carry a trailing batch shape
``(3, *batch)`` and all outputs gain ``*batch`` leading axes.  Single-point
wrappers return squeezed arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jets
from .errors import DegenerateMetric, FormulaMismatch, ZeroDirection
from .policy import DEFAULT_POLICY

_EYE = np.eye(3)


def _prep(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    batch = np.broadcast_shapes(x.shape[1:] if x.ndim > 1 else (), y.shape[1:] if y.ndim > 1 else ())
    x = np.broadcast_to(x.reshape((3,) + x.shape[1:]), (3,) + batch)
    y = np.broadcast_to(y.reshape((3,) + y.shape[1:]), (3,) + batch)
    return x, y, batch


def _check_direction(y, policy):
    norm = np.sqrt(np.sum(np.asarray(y, dtype=float) ** 2, axis=0))
    if np.any(norm <= policy.zero_direction_floor):
        raise ZeroDirection(f"direction norm {float(np.min(norm)):.3e} below floor")
    return norm


@dataclass
class GeometryBatch:
    """Per-point geometry package; arrays carry the batch shape in front."""

    x: np.ndarray
    y: np.ndarray
    F: np.ndarray
    g: np.ndarray            # (..., 3, 3)
    g_inv: np.ndarray
    cartan: np.ndarray | None = None       # (..., 3, 3, 3)
    dg_dy: np.ndarray | None = None
    dg_dx: np.ndarray | None = None        # (..., k, i, j) = d g_ij / dx_k
    sprayG: np.ndarray | None = None       # (..., 3)
    N: np.ndarray | None = None            # (..., i, j) = dG^i/dy_j
    gamma: np.ndarray | None = None        # (..., i, j, k)
    chern_alt: np.ndarray | None = None    # route (b) value, diagnostics
    extras: dict = field(default_factory=dict)


_LEVELS = {"g": (0, 2), "cartan": (0, 3), "spray": (1, 2), "nonlinear": (1, 3), "full": (1, 4)}


def geometry_batch(spec, x, y, level="full", policy=DEFAULT_POLICY, check_chern="record", checks=True):
    """Evaluate the geometry package at (x, y); main entry of the kernel.

    ``check_chern`` controls the two-route Chern-coefficient comparison:
    ``"raise"`` enforces agreement (FormulaMismatch beyond tolerance),
    ``"record"`` stores the deviation in ``extras`` only, ``False`` skips
    route (b) altogether.  The routes agree to round-off exactly when the
    connection is of Berwald type (Riemannian fields, locally Minkowski
    Randers); for general metrics they differ by the Landsberg correction,
    so the raise mode doubles as a non-Berwald detector.

    ``checks=False`` skips the positive-definiteness and convexity guards;
    used internally for finite-difference displacements of an already
    validated center point.
    """
    x, y, batch = _prep(x, y)
    _check_direction(y, policy)
    if checks:
        spec.check_convexity(x, margin=policy.randers_convexity_margin)
    px, py = _LEVELS[level]
    space = jets.jetspace(px, py)
    xs, ys = jets.variables(space, x, y, batch)
    f2 = spec.f2(xs, ys)

    fval = f2.value
    if np.any(fval <= 0):
        raise DegenerateMetric("F^2 not positive at a sampled point")
    F = np.sqrt(fval)

    def dy(*k):
        e = [0, 0, 0]
        for i in k:
            e[i] += 1
        return (0, 0, 0, e[0], e[1], e[2])

    g = np.empty(batch + (3, 3))
    for i in range(3):
        for j in range(i, 3):
            g[..., i, j] = g[..., j, i] = 0.5 * f2.deriv(dy(i, j))
    if checks:
        w = np.linalg.eigvalsh(g)
        if np.any(w[..., 0] <= policy.degenerate_floor):
            raise DegenerateMetric(
                f"fundamental tensor eigenvalue {float(w[..., 0].min()):.3e} at or below floor"
            )
    g_inv = np.linalg.inv(g)
    out = GeometryBatch(x=x, y=y, F=F, g=g, g_inv=g_inv)

    if py >= 3:
        dgdy = np.empty(batch + (3, 3, 3))
        for i in range(3):
            for j in range(i, 3):
                for k in range(3):
                    dgdy[..., i, j, k] = dgdy[..., j, i, k] = 0.5 * f2.deriv(dy(i, j, k))
        out.dg_dy = dgdy
        out.cartan = 0.5 * F[..., None, None, None] * dgdy

    if px >= 1:
        dgdx = np.empty(batch + (3, 3, 3))
        for k in range(3):
            e = tuple(1 if m == k else 0 for m in range(3))
            for i in range(3):
                for j in range(i, 3):
                    dgdx[..., k, i, j] = dgdx[..., k, j, i] = 0.5 * f2.deriv(e + dy(i, j)[3:])
        out.dg_dx = dgdx

        # spray/connection assembly on y-series of order py - 2
        sub = jets.jetspace(0, py - 2)
        gser = [[jets.partial_yseries(f2, sub, _unit2(i, j)) * 0.5 for j in range(3)] for i in range(3)]
        dgxser = [
            [[jets.partial_yseries(f2, sub, _unit2(i, j), dx=k) * 0.5 for j in range(3)] for i in range(3)]
            for k in range(3)
        ]
        yser = [jets.Jet.var(sub, 3 + i, y[i], batch) for i in range(3)]
        ginvser = _invert3(gser)
        yy = [[yser[j] * yser[k] for k in range(3)] for j in range(3)]
        B = []
        for l in range(3):
            acc = None
            for j in range(3):
                for k in range(3):
                    cof = dgxser[k][j][l] + dgxser[j][k][l] - dgxser[l][j][k]
                    term = cof * yy[j][k]
                    acc = term if acc is None else acc + term
            B.append(acc)
        Gser = []
        for i in range(3):
            acc = None
            for l in range(3):
                term = ginvser[i][l] * B[l]
                acc = term if acc is None else acc + term
            Gser.append(acc * 0.25)

        out.sprayG = np.stack([Gser[i].value for i in range(3)], axis=-1)
        if py - 2 >= 1:
            N = np.empty(batch + (3, 3))
            for i in range(3):
                for j in range(3):
                    N[..., i, j] = Gser[i].deriv(dy(j))
            out.N = N
        if py - 2 >= 2:
            gamma = np.empty(batch + (3, 3, 3))
            for i in range(3):
                for j in range(3):
                    for k in range(j, 3):
                        gamma[..., i, j, k] = gamma[..., i, k, j] = Gser[i].deriv(dy(j, k))
            out.gamma = gamma
            if check_chern:
                out.chern_alt = _chern_from_deflection(out)
                scale = max(float(np.max(np.abs(gamma))), 1.0)
                err = float(np.max(np.abs(gamma - out.chern_alt))) / scale
                out.extras["chern_route_dev"] = err
                if check_chern == "raise" and err > policy.chern_formula_rtol:
                    raise FormulaMismatch(
                        f"Chern coefficient routes disagree: rel dev {err:.3e} "
                        f"(tol {policy.chern_formula_rtol:.1e}); the deflection "
                        "route reproduces d2G/dy2 only for Berwald-type metrics"
                    )
    return out


def _unit2(i, j):
    e = [0, 0, 0]
    e[i] += 1
    e[j] += 1
    return tuple(e)


def _invert3(m):
    """Inverse of a symmetric 3x3 matrix of jets via adjugate / determinant."""
    c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1]
    c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2]
    c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0]
    det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02
    inv_det = 1.0 / det
    c11 = m[0][0] * m[2][2] - m[0][2] * m[2][0]
    c12 = m[0][1] * m[2][0] - m[0][0] * m[2][1]
    c22 = m[0][0] * m[1][1] - m[0][1] * m[1][0]
    a01 = c01 * inv_det
    a02 = c02 * inv_det
    a12 = c12 * inv_det
    return [
        [c00 * inv_det, a01, a02],
        [a01, c11 * inv_det, a12],
        [a02, a12, c22 * inv_det],
    ]


def _chern_from_deflection(geo: GeometryBatch):
    """Route (b): Gamma from delta g / delta x with the horizontal basis."""
    # delta_k g_ij = dg_ij/dx_k - N^m_k dg_ij/dy_m
    dg = geo.dg_dx - np.einsum("...mk,...ijm->...kij", geo.N, geo.dg_dy)
    return 0.5 * np.einsum(
        "...il,...kjl->...ijk",
        geo.g_inv,
        dg + np.transpose(dg, axes=list(range(dg.ndim - 3)) + [-2, -3, -1])
        - np.transpose(dg, axes=list(range(dg.ndim - 3)) + [-1, -2, -3]),
    )


# -- single-point operation wrappers (the spec contracts) ---------------------


def eval_metric(spec, x, y, policy=DEFAULT_POLICY):
    """F(x, y); exact for riemannian / Randers closed forms."""
    x, y, batch = _prep(x, y)
    _check_direction(y, policy)
    spec.check_convexity(x, margin=policy.randers_convexity_margin)
    xs = tuple(x[i] for i in range(3))
    ys = tuple(y[i] for i in range(3))
    f = spec.f(xs, ys)
    f = f.value if isinstance(f, jets.Jet) else np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise DegenerateMetric("F not positive at a sampled point")
    return f if batch else float(f)


def fundamental_tensor(spec, x, y, policy=DEFAULT_POLICY):
    return geometry_batch(spec, x, y, level="g", policy=policy).g


def cartan_tensor(spec, x, y, policy=DEFAULT_POLICY):
    return geometry_batch(spec, x, y, level="cartan", policy=policy).cartan


def spray_coefficients(spec, x, y, policy=DEFAULT_POLICY):
    return geometry_batch(spec, x, y, level="spray", policy=policy).sprayG


def nonlinear_connection(spec, x, y, policy=DEFAULT_POLICY):
    return geometry_batch(spec, x, y, level="nonlinear", policy=policy).N


def chern_coefficients(spec, x, y, policy=DEFAULT_POLICY):
    """Gamma^i_jk by d2G/dy2, asserted against the deflection-basis formula."""
    return geometry_batch(spec, x, y, level="full", policy=policy, check_chern="raise").gamma


# -- curvature ------------------------------------------------------------------


def _gamma_map(spec, x, y, policy):
    return geometry_batch(
        spec, x, y, level="full", policy=policy, check_chern=False, checks=False
    ).gamma


def _richardson(fm2, fm1, fp1, fp2, h):
    """4th-order five-point first derivative."""
    return (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h)


def hh_curvature(spec, x, y, policy=DEFAULT_POLICY, geo=None):
    """Lowered hh-curvature R_ijkl (antisymmetric in k, l) plus the package.

    Returns ``(R, geo)`` where ``R[..., i, j, k, l]`` is the lowered tensor
    g_im R^m_jkl and ``geo`` the center-point geometry batch.
    """
    x, y, batch = _prep(x, y)
    if geo is None:
        geo = geometry_batch(spec, x, y, level="full", policy=policy)
    h = policy.fd_step
    dgam_dx = np.empty(batch + (3, 3, 3, 3))  # (..., k, i, j, l): d Gamma^i_jl / dx_k
    for k in range(3):
        e = _EYE[k].reshape((3,) + (1,) * len(batch))
        vals = [_gamma_map(spec, x + s * h * e, y, policy) for s in (-2, -1, 1, 2)]
        dgam_dx[..., k, :, :, :] = _richardson(*vals, h)
    if spec.direction_independent_geometry:
        # Gamma carries no y-dependence (riemannian kind): the N-contraction
        # of dGamma/dy vanishes identically
        dgam = dgam_dx
    else:
        # direction displacement scaled to the direction's size
        ynorm = np.sqrt(np.sum(y**2, axis=0))
        dgam_dy = np.empty(batch + (3, 3, 3, 3))
        for m in range(3):
            e = _EYE[m].reshape((3,) + (1,) * len(batch))
            hm = h * ynorm
            vals = [_gamma_map(spec, x, y + s * hm * e, policy) for s in (-2, -1, 1, 2)]
            dgam_dy[..., m, :, :, :] = _richardson(*vals, 1.0) / hm[..., None, None, None]
        # delta Gamma^i_jl / delta x_k = d/dx_k - N^m_k d/dy_m
        dgam = dgam_dx - np.einsum("...mk,...mijl->...kijl", geo.N, dgam_dy)
    gyy = np.einsum("...imk,...mjl->...ijkl", geo.gamma, geo.gamma)
    # delta_k Gamma^i_jl reindexed to (..., i, j, k, l); swapping k,l gives the
    # delta_l Gamma^i_jk counterpart
    dk_ijl = np.transpose(dgam, axes=list(range(dgam.ndim - 4)) + [-3, -2, -4, -1])
    r_up = dk_ijl - np.swapaxes(dk_ijl, -1, -2) + gyy - np.swapaxes(gyy, -1, -2)
    R = np.einsum("...im,...mjkl->...ijkl", geo.g, r_up)
    return R, geo


def orthonormal_frame(g, basis=None):
    """Rows e_a of a g-orthonormal frame, Gram-Schmidt in fixed order 1,2,3.

    Equivalent to inverting the Cholesky factor; an optional ``basis`` (rows)
    seeds the procedure for frame-invariance tests.
    """
    g = np.asarray(g, dtype=float)
    if basis is not None:
        b = np.asarray(basis, dtype=float)
        g = np.einsum("...ai,...ij,...bj->...ab", b, g, b)
        L = np.linalg.cholesky(g)
        return np.einsum("...ab,...bi->...ai", np.linalg.inv(L), b)
    L = np.linalg.cholesky(g)
    return np.linalg.inv(L)


def ricci(spec, x, y, policy=DEFAULT_POLICY, curv=None):
    """First Ricci curvature r(xi, h(eta)) in coordinate components (..., p, q)."""
    if curv is None:
        curv = hh_curvature(spec, x, y, policy=policy)
    R, geo = curv
    frame = orthonormal_frame(geo.g)
    comp = np.einsum("...aj,...am->...jm", frame, frame)  # completeness sum
    ric = np.einsum("...jm,...pjqm->...pq", comp, R)
    return ric, geo


def scalar_curvature(spec, x, y, policy=DEFAULT_POLICY, curv=None, frame_basis=None):
    """Horizontal scalar curvature S-hat: double frame trace of the hh-curvature."""
    if curv is None:
        curv = hh_curvature(spec, x, y, policy=policy)
    R, geo = curv
    frame = orthonormal_frame(geo.g, basis=frame_basis)
    ric = np.einsum("...aj,...am,...pjqm->...pq", frame, frame, R)
    return np.einsum("...bp,...bq,...pq->...", frame, frame, ric), geo


@dataclass
class GeometryAtPoint:
    """Single-point package mirroring the batch, for reporting paths."""

    x: np.ndarray
    y: np.ndarray
    F: float
    g: np.ndarray
    g_inv: np.ndarray
    cartan: np.ndarray
    sprayG: np.ndarray
    N: np.ndarray
    gamma: np.ndarray
    curvR: np.ndarray
    ricci: np.ndarray
    scalarS: float


def geometry_at_point(spec, x, y, policy=DEFAULT_POLICY) -> GeometryAtPoint:
    R, geo = hh_curvature(spec, x, y, policy=policy)
    ric, _ = ricci(spec, x, y, policy=policy, curv=(R, geo))
    S, _ = scalar_curvature(spec, x, y, policy=policy, curv=(R, geo))
    return GeometryAtPoint(
        x=np.asarray(x, dtype=float),
        y=np.asarray(y, dtype=float),
        F=float(geo.F),
        g=geo.g,
        g_inv=geo.g_inv,
        cartan=geo.cartan,
        sprayG=geo.sprayG,
        N=geo.N,
        gamma=geo.gamma,
        curvR=R,
        ricci=ric,
        scalarS=float(S),
    )
