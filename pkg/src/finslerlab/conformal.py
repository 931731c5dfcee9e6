r"""Conformal deformations, transformation laws, Yamabe residuals, heat invariants.

Dimension is pinned to n = 3: the deformation F~ = phi^2 F induces
g~ = phi^4 g and a volume-density scaling eta~ = phi^6 eta.  The density of
eta_F is realized as sqrt(det g(x, y)) against dx x dsigma(y); the paper
never writes eta_F in coordinates, and this choice reproduces the Riemannian
volume in the direction-independent case while satisfying the phi^6 law
exactly (a modeling choice, stated here on purpose).

The predicted transformation of the horizontal scalar curvature uses the
invariant-connection branch

    S~ = e^{-2u} [ S + 4 Lap(u) - 2 ||grad u||_g^2 ],   u = ln phi^2,

with the positive Laplacian convention throughout.  The general law's
Theta-tensor terms are out of scope.  The Yamabe-type residual is offered in
the n = 3 form (8 Lap(phi) + S phi - S~ phi^5), the general-n form, and the
N = 2n-1 sphere-bundle form; the last carries the published sign flip and is
reported verbatim, not reconciled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jets, metrics as _metrics
from .errors import MeshTooCoarse, ModeMismatch, NonPositiveFactor
from .fields import ScalarField, covariant_derivative_k, horizontal_laplacian
from .geometry import geometry_batch, hh_curvature, ricci, scalar_curvature, _prep
from .mesh import SphereBundleMesh, quadrature_error_estimate, sample_scalar
from .policy import DEFAULT_POLICY


@dataclass
class ConformalFactor:
    """Positive factor phi on SM; u = ln phi^2 is always derived from phi."""

    phi: ScalarField
    label: str = ""

    def __post_init__(self):
        if not self.label:
            self.label = self.phi.label or "phi"

    @property
    def direction_independent(self):
        return self.phi.direction_independent

    def u_field(self) -> ScalarField:
        """u with e^u F = phi^2 F; recomputed from phi, no separate storage."""
        phi_fn = self.phi.fn
        return ScalarField(
            lambda xs, ys: 2.0 * jets.log(phi_fn(xs, ys)),
            self.phi.direction_independent,
            label=f"ln({self.label}^2)",
        )

    def values(self, x, y):
        v = self.phi.values(x, y)
        if np.any(v <= 0):
            raise NonPositiveFactor(f"factor {self.label} reaches {float(np.min(v)):.3e} <= 0")
        return v


def _factor(phi) -> ConformalFactor:
    if isinstance(phi, ConformalFactor):
        return phi
    if isinstance(phi, ScalarField):
        return ConformalFactor(phi)
    raise NonPositiveFactor("conformal factor must be a ScalarField or ConformalFactor")


def conformal_deform(spec, phi, policy=DEFAULT_POLICY):
    """Metric spec of F~ = phi^2 F; preserves the metric kind when possible.

    For a direction-independent factor, riemannian coefficients transform as
    phi^4 a and Randers data as (phi^4 a, phi^2 b); otherwise the deformed
    metric is a generic closed form phi(x,[y])^2 F(x,y) (the factor evaluator
    must be 0-homogeneous in the direction).
    """
    fac = _factor(phi)
    phi_fn = fac.phi.fn
    label = f"conformal[{fac.label}]({spec.label})"
    chart = spec.chart

    if fac.direction_independent and spec.kind == "riemannian":
        base_a = spec.a_matrix

        def a_fn(xs):
            p = phi_fn(xs, None)
            p4 = p * p * p * p
            a = base_a(xs)
            return [[p4 * a[i][j] for j in range(3)] for i in range(3)]

        return _metrics.MetricSpec("riemannian", chart, label, a_fn=a_fn)

    if fac.direction_independent and spec.kind == "randers":
        base_a, base_b = spec.a_matrix, spec.b_covector

        def a_fn(xs):
            p = phi_fn(xs, None)
            p4 = p * p * p * p
            a = base_a(xs)
            return [[p4 * a[i][j] for j in range(3)] for i in range(3)]

        def b_fn(xs):
            p = phi_fn(xs, None)
            p2 = p * p
            b = base_b(xs)
            return [p2 * b[0], p2 * b[1], p2 * b[2]]

        return _metrics.MetricSpec("randers", chart, label, a_fn=a_fn, b_fn=b_fn)

    base_f = spec.f

    def f_fn(xs, ys):
        p = phi_fn(xs, ys)
        return p * p * base_f(xs, ys)

    return _metrics.MetricSpec("closed_form", chart, label, f_fn=f_fn)


def volume_density(spec, x, y_unit, policy=DEFAULT_POLICY):
    """Density of eta_F at (x, [y]) relative to dx x dsigma: sqrt(det g)."""
    geo = geometry_batch(spec, x, y_unit, level="g", policy=policy)
    return np.sqrt(np.linalg.det(geo.g))


def scalar_transform_values(spec, phi, x, y, policy=DEFAULT_POLICY):
    """Predicted deformed scalar curvature S~ on points, invariant-connection branch."""
    fac = _factor(phi)
    x, y, batch = _prep(x, y)
    fac.values(x, y)  # positivity check
    u = fac.u_field()
    S, geo = scalar_curvature(spec, x, y, policy=policy)
    lap_u = horizontal_laplacian(u, spec, x, y, policy=policy)
    space = jets.jetspace(1, 0)
    uj = u.jet(space, x, y, batch)
    du = np.stack([uj.deriv(tuple(1 if m == i else 0 for m in range(3)) + (0, 0, 0)) for i in range(3)], axis=-1)
    grad2 = np.einsum("...ij,...i,...j->...", geo.g_inv, du, du)
    uval = uj.value
    return np.exp(-2.0 * uval) * (S + 4.0 * lap_u - 2.0 * grad2)


class ValueField:
    """Field evaluable pointwise only (curvature is not jet-composable)."""

    def __init__(self, values_fn, direction_independent, label=""):
        self._fn = values_fn
        self.direction_independent = direction_independent
        self.label = label

    def values(self, x, y):
        return self._fn(x, y)


def scalar_transform(spec, phi, policy=DEFAULT_POLICY) -> ValueField:
    """Predicted S~ as a value-evaluable field."""
    fac = _factor(phi)
    return ValueField(
        lambda x, y: scalar_transform_values(spec, fac, x, y, policy=policy),
        spec.direction_independent_geometry and fac.direction_independent,
        label=f"Stilde[{fac.label}]",
    )


def direct_scalar_values(spec, phi, x, y, policy=DEFAULT_POLICY):
    """S~ from the geometry kernel applied to the deformed spec."""
    fac = _factor(phi)
    deformed = conformal_deform(spec, fac, policy=policy)
    S, _ = scalar_curvature(deformed, x, y, policy=policy)
    return S


@dataclass
class YamabeReport:
    residual: object          # SampledField
    sup_norm: float
    l2_norm: float
    mode: str
    derivative_path: str


def yamabe_residual(spec, phi, stilde, mesh: SphereBundleMesh, mode="n3", n=None, N=None,
                    derivative_path="jets", policy=DEFAULT_POLICY):
    """Pointwise Yamabe-type residual over a mesh, plus sup and L2 norms.

    ``stilde`` may be a SampledField, an (N, D) array, or a value-evaluable
    field.  Modes: "n3" (8 Lap phi + S phi - S~ phi^5), "general_n" (needs
    ``n``), "eq2" (the N = 2n-1 published variant, verbatim signs).

    ``derivative_path``: "jets" evaluates Lap(phi) pointwise from the
    closed form; "sampled" uses 4th-order grid stencils on the sampled
    factor, which is the honest mesh-discretization error path.
    """
    from .mesh import SampledField, sampled_covariant

    fac = _factor(phi)
    if mode == "n3":
        nn = 3
    elif mode == "general_n":
        if n is None:
            raise ModeMismatch("general_n mode requires n")
        nn = int(n)
    elif mode == "eq2":
        nn = 3
        if N is not None and n is not None and N != 2 * n - 1:
            raise ModeMismatch(f"N = {N} conflicts with n = {n} (need N = 2n - 1)")
    else:
        raise ModeMismatch(f"unknown mode {mode!r}")
    if mode != "eq2" and N is not None:
        raise ModeMismatch("N applies to the eq2 mode only")

    phis = sample_scalar(fac.phi, mesh)
    if np.any(phis.values <= 0):
        raise NonPositiveFactor(f"factor {fac.label} not positive on the mesh")
    Ssamp = scalar_field_samples(spec, mesh, policy=policy)
    if isinstance(stilde, SampledField):
        st = stilde.values
    elif hasattr(stilde, "values") and callable(getattr(stilde, "values")):
        st = _field_on_mesh(stilde, mesh)
    else:
        st = np.asarray(stilde, dtype=float)

    if derivative_path == "jets":
        lap = _lap_on_mesh(fac.phi, spec, mesh, policy)
    elif derivative_path == "sampled":
        lap = _lap_sampled(phis, spec, mesh, policy)
    else:
        raise ModeMismatch(f"unknown derivative path {derivative_path!r}")

    pv = phis.values
    if mode == "eq2":
        Nn = 2 * nn - 1 if N is None else int(N)
        coef = 4.0 * (Nn - 1) / (Nn - 3)
        expo = (Nn + 5) / (Nn - 3)
        resid = coef * lap - Ssamp * pv + st * pv**expo
    else:
        coef = 4.0 * (nn - 1) / (nn - 2)
        expo = (nn + 2) / (nn - 2)
        resid = coef * lap + Ssamp * pv - st * pv**expo
    rf = SampledField(resid, mesh, label=f"yamabe-residual[{fac.label}]")
    sup = float(np.max(np.abs(resid)))
    l2 = float(np.sqrt(mesh.integrate_values(resid**2)))
    return YamabeReport(rf, sup, l2, mode, derivative_path)


def _field_on_mesh(field, mesh):
    vals = sample_scalar(field, mesh) if isinstance(field, ScalarField) else None
    if vals is not None:
        return vals.values
    X = np.repeat(mesh.xgrid[:, :, None], mesh.n_directions, axis=2)
    Y = np.broadcast_to(mesh.directions.T[:, None, :], (3, mesh.n_nodes, mesh.n_directions))
    return np.asarray(field.values(X, Y), dtype=float)


def _lap_on_mesh(u: ScalarField, spec, mesh, policy):
    if u.direction_independent and spec.direction_independent_geometry:
        lap = horizontal_laplacian(u, spec, mesh.xgrid, mesh.directions[0][:, None], policy=policy)
        return np.repeat(lap[:, None], mesh.n_directions, axis=1)
    X = np.repeat(mesh.xgrid[:, :, None], mesh.n_directions, axis=2)
    Y = np.broadcast_to(mesh.directions.T[:, None, :], (3, mesh.n_nodes, mesh.n_directions))
    return horizontal_laplacian(u, spec, X, Y, policy=policy)


def _lap_sampled(fs, spec, mesh, policy):
    """Positive Laplacian of a sampled field: -(div-form via stencils)."""
    from .errors import DirectionJetsUnavailable
    from .mesh import geometry_fields, grid_derivative

    if not spec.direction_independent_geometry:
        raise DirectionJetsUnavailable(
            "sampled-path Laplacian needs direction derivatives of the "
            "gradient on non-riemannian specs; use the jets path"
        )
    geo = geometry_fields(spec, mesh, policy)
    du = np.stack([grid_derivative(fs.values, mesh, ax, 1) for ax in range(3)], axis=-1)
    W = np.einsum("ndij,ndi->ndj", geo["g_inv"], du)
    divW = np.zeros_like(fs.values)
    for j in range(3):
        divW += grid_derivative(W[..., j], mesh, j, 1)
    divW += np.einsum("ndjjm,ndm->nd", geo["gamma"][:, :, :, :, :], W)
    return -divW


def scalar_field_samples(spec, mesh: SphereBundleMesh, policy=DEFAULT_POLICY):
    """S-hat tabulated over the mesh (one direction when geometry allows)."""
    if spec.direction_independent_geometry:
        S, _ = scalar_curvature(spec, mesh.xgrid, mesh.directions[0][:, None], policy=policy)
        return np.repeat(S[:, None], mesh.n_directions, axis=1)
    N, D = mesh.n_nodes, mesh.n_directions
    out = np.empty((N, D))
    chunk = max(1, 60_000 // max(D, 1))
    for s in range(0, N, chunk):
        sl = slice(s, min(s + chunk, N))
        nb = sl.stop - sl.start
        X = np.repeat(mesh.xgrid[:, sl, None], D, axis=2)
        Y = np.broadcast_to(mesh.directions.T[:, None, :], (3, nb, D))
        S, _ = scalar_curvature(spec, X, Y, policy=policy)
        out[sl] = S
    return out


def deformed_curvature_samples(spec, phi, mesh: SphereBundleMesh, policy=DEFAULT_POLICY):
    """(S~, ||ricci~||^2) of the deformed metric tabulated over the mesh.

    The Ricci norm is the full g~-orthonormal-frame contraction
    r~_pq r~_p'q' g~^{pp'} g~^{qq'}.
    """
    fac = _factor(phi)
    deformed = conformal_deform(spec, fac, policy=policy)

    def _one(x, y):
        curv = hh_curvature(deformed, x, y, policy=policy)
        S, geo = scalar_curvature(deformed, x, y, policy=policy, curv=curv)
        ric, _ = ricci(deformed, x, y, policy=policy, curv=curv)
        rn2 = np.einsum("...pa,...qb,...pq,...ab->...", geo.g_inv, geo.g_inv, ric, ric)
        return S, rn2

    if deformed.direction_independent_geometry:
        S, rn2 = _one(mesh.xgrid, mesh.directions[0][:, None])
        D = mesh.n_directions
        return np.repeat(S[:, None], D, axis=1), np.repeat(rn2[:, None], D, axis=1)
    N, D = mesh.n_nodes, mesh.n_directions
    Sout = np.empty((N, D))
    Rout = np.empty((N, D))
    chunk = max(1, 40_000 // max(D, 1))
    for s in range(0, N, chunk):
        sl = slice(s, min(s + chunk, N))
        nb = sl.stop - sl.start
        X = np.repeat(mesh.xgrid[:, sl, None], D, axis=2)
        Y = np.broadcast_to(mesh.directions.T[:, None, :], (3, nb, D))
        S, rn2 = _one(X, Y)
        Sout[sl], Rout[sl] = S, rn2
    return Sout, Rout


@dataclass
class HeatInvariants:
    a0: float
    a1: float
    a2: float
    err0: float
    err1: float
    err2: float
    a1_stilde_form: float
    a1_forms_gap: float
    stilde_source: str


def heat_invariants(spec, phi, mesh: SphereBundleMesh, stilde_source="direct",
                    tol=None, policy=DEFAULT_POLICY,
                    precomputed=None) -> HeatInvariants:
    """Heat invariants a0~, a1~, a2~ by sphere-bundle quadrature.

    a0~ = int phi^6 eta; a1~ = (1/6) int (S phi^2 + 8 |nabla-hat phi|^2) eta
    (the published phi-form; the S~-form (1/6) int S~ eta~ is also computed
    and the gap reported); a2~ = (1/360) int (3 S~^2 + 6 |ricci~|^2) eta~.

    ``precomputed`` may carry ("stilde", "ricci2") mesh samples to share one
    deformed-curvature sweep across callers.
    """
    from .mesh import covariant_norm2_samples

    fac = _factor(phi)
    pv = sample_scalar(fac.phi, mesh).values
    if np.any(pv <= 0):
        raise NonPositiveFactor(f"factor {fac.label} not positive on the mesh")

    integ0 = pv**6
    a0 = mesh.integrate_values(integ0)
    err0 = quadrature_error_estimate(integ0, mesh)

    Ssamp = scalar_field_samples(spec, mesh, policy=policy)
    grad2 = covariant_norm2_samples(fac.phi, spec, mesh, 1, policy=policy)
    integ1 = (Ssamp * pv**2 + 8.0 * grad2) / 6.0
    a1 = mesh.integrate_values(integ1)
    err1 = quadrature_error_estimate(integ1, mesh)

    if precomputed is not None and "stilde" in precomputed:
        st, rn2 = precomputed["stilde"], precomputed["ricci2"]
    elif stilde_source == "direct":
        st, rn2 = deformed_curvature_samples(spec, fac, mesh, policy=policy)
    elif stilde_source == "predicted":
        st = scalar_transform_values(
            spec, fac, *_mesh_points(mesh), policy=policy
        ).reshape(mesh.n_nodes, mesh.n_directions)
        _, rn2 = deformed_curvature_samples(spec, fac, mesh, policy=policy)
    else:
        raise ModeMismatch(f"unknown stilde source {stilde_source!r}")

    a1_alt = mesh.integrate_values(st * integ0) / 6.0
    integ2 = (3.0 * st**2 + 6.0 * rn2) * integ0 / 360.0
    a2 = mesh.integrate_values(integ2)
    err2 = quadrature_error_estimate(integ2, mesh)

    if tol is not None and max(err0, err1, err2) > tol:
        raise MeshTooCoarse(
            f"quadrature error estimate {max(err0, err1, err2):.3e} exceeds tolerance {tol:.3e}"
        )
    return HeatInvariants(
        a0=float(a0), a1=float(a1), a2=float(a2),
        err0=err0, err1=err1, err2=err2,
        a1_stilde_form=float(a1_alt), a1_forms_gap=float(abs(a1 - a1_alt)),
        stilde_source=stilde_source if precomputed is None else "precomputed",
    )


def _mesh_points(mesh):
    X = np.repeat(mesh.xgrid[:, :, None], mesh.n_directions, axis=2)
    Y = np.broadcast_to(mesh.directions.T[:, None, :], (3, mesh.n_nodes, mesh.n_directions))
    return X, Y
