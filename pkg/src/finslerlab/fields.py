r"""Differential operators on scalar fields over the sphere bundle.

Fields are closed-form evaluators ``fn(xs, ys) -> jet`` written against
:mod:`finslerlab.jets` primitives; a field flagged ``direction_independent``
must ignore its direction argument.  Sampled (grid) representations live in
:mod:`finslerlab.mesh`, which falls back to 4th-order stencils.

Conventions (all pinned to the positive, geometer's Laplacian):

* gradient        grad(u)^j = g^{ij} du/dx_i  (the local formula; for
  direction-dependent u this differs from du(h(xi)) by N-terms — see
  :func:`gradient_defect`)
* Hessian         Hu(xi, h(eta)) = g(xi, nabla_{h(eta)} grad u); the second
  slot accepts pure horizontal or pure vertical lifts only
* divergence      Dhat(xi) = delta xi^i/delta x_i + Gamma^i_{i m} xi^m
* horizontal Laplacian   Lap(u) = -Dhat(grad u), cross-checked against
  -sum_a Hu(e_a, h(e_a)); on flat specs Lap(u) = -sum_i d2u/dx_i^2
* vertical Laplacian     Lapv(u) = -sum_a Hu(e_a, v(e_a)) with
  v(e) = F e^i d/dy_i; the vertical Hessian differentiates u along the
  fiber (the Chern connection form has no dy-component, so there is no
  connection correction); on flat specs and degree-0 u this is the
  positive sphere Laplacian
* covariant derivatives  nabla-hat u = delta u/delta x, nabla-hat^2 as in
  the k-capped contract; norms contract every slot with g^{-1}
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jets
from .errors import FormulaMismatch, UnsupportedLift, UnsupportedOrder
from .geometry import geometry_batch, hh_curvature, orthonormal_frame, _prep
from .policy import DEFAULT_POLICY


@dataclass
class ScalarField:
    """Closed-form function on SM with jets in x and direction."""

    fn: object
    direction_independent: bool = True
    label: str = ""

    def jet(self, space, x, y, batch=()):
        xs, ys = jets.variables(space, x, y, batch)
        out = self.fn(xs, ys)
        if not isinstance(out, jets.Jet):
            out = jets.Jet.const(space, out, batch)
        return out

    def values(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        xs = tuple(x[i] for i in range(3))
        ys = tuple(y[i] for i in range(3))
        out = self.fn(xs, ys)
        return np.asarray(out, dtype=float)

    @staticmethod
    def constant(c, label=None):
        return ScalarField(lambda xs, ys: c + 0.0 * xs[0], True, label or f"const:{c}")

    @staticmethod
    def from_x_function(fn, label=""):
        """Field of constant direction built from a chart function."""
        return ScalarField(lambda xs, ys: fn(xs), True, label)


@dataclass
class VectorSection:
    """Coordinate components xi^i(x, y) of a section of the pulled-back bundle."""

    fn: object  # (xs, ys) -> tuple of 3 jets
    direction_independent: bool = True
    label: str = ""

    def jet(self, space, x, y, batch=()):
        xs, ys = jets.variables(space, x, y, batch)
        comps = self.fn(xs, ys)
        out = []
        for c in comps:
            if not isinstance(c, jets.Jet):
                c = jets.Jet.const(space, c, batch)
            out.append(c)
        return out

    @staticmethod
    def constant(v, label=""):
        v = np.asarray(v, dtype=float)
        return VectorSection(lambda xs, ys: (v[0] + 0.0 * xs[0], v[1] + 0.0 * xs[0], v[2] + 0.0 * xs[0]), True, label)


_E1 = (0, 0, 0, 1, 0, 0)


def _mono(dx=(), dy=()):
    e = [0, 0, 0, 0, 0, 0]
    for i in dx:
        e[i] += 1
    for i in dy:
        e[3 + i] += 1
    return tuple(e)


def _field_jets(u: ScalarField, x, y, batch, px=2, py=2):
    space = jets.jetspace(px, py)
    return u.jet(space, x, y, batch)


def gradient(u: ScalarField, spec, x, y, policy=DEFAULT_POLICY):
    """grad(u)^j = g^{ij} du/dx_i at (x, y); batched over trailing axes."""
    x, y, batch = _prep(x, y)
    geo = geometry_batch(spec, x, y, level="g", policy=policy)
    uj = _field_jets(u, x, y, batch, px=1, py=0)
    du = np.stack([uj.deriv(_mono(dx=(i,))) for i in range(3)], axis=-1)
    return np.einsum("...ij,...i->...j", geo.g_inv, du)


def gradient_defect(u: ScalarField, spec, x, y, policy=DEFAULT_POLICY):
    """Diagnostic |du(h(e_k)) - g(grad u, e_k)| = |N^m_k du/dy_m| per k.

    Zero for direction-independent fields; for direction-dependent fields it
    quantifies how far the local gradient formula is from the horizontal
    differential.  Reported, never silently folded into the gradient.
    """
    x, y, batch = _prep(x, y)
    geo = geometry_batch(spec, x, y, level="nonlinear", policy=policy)
    uj = _field_jets(u, x, y, batch, px=0, py=1)
    duy = np.stack([uj.deriv(_mono(dy=(m,))) for m in range(3)], axis=-1)
    return np.abs(np.einsum("...mk,...m->...k", geo.N, duy))


def _grad_vec_derivs(u, geo, x, y, batch):
    """W = grad u with its x- and y-derivative blocks at the query point."""
    uj = _field_jets(u, x, y, batch, px=2, py=2)
    du = np.stack([uj.deriv(_mono(dx=(i,))) for i in range(3)], axis=-1)
    dudxx = np.empty(batch + (3, 3))
    dudxy = np.empty(batch + (3, 3))
    for i in range(3):
        for l in range(3):
            dudxx[..., i, l] = uj.deriv(_mono(dx=(i, l)))
            dudxy[..., i, l] = uj.deriv(_mono(dx=(i,), dy=(l,)))
    ginv = geo.g_inv
    # dg^{-1}/dx_l = -g^{-1} dg/dx_l g^{-1}, same for y
    dginv_dx = -np.einsum("...ia,...lab,...bj->...lij", ginv, geo.dg_dx, ginv)
    dginv_dy = -np.einsum("...ia,...abl,...bj->...lij", ginv, geo.dg_dy, ginv)
    W = np.einsum("...ij,...i->...j", ginv, du)
    dW_dx = np.einsum("...lij,...i->...lj", dginv_dx, du) + np.einsum(
        "...ij,...il->...lj", ginv, dudxx
    )
    dW_dy = np.einsum("...lij,...i->...lj", dginv_dy, du) + np.einsum(
        "...ij,...il->...lj", ginv, dudxy
    )
    return W, dW_dx, dW_dy, uj


def hessian(u: ScalarField, spec, x, y, xi, eta, lift="h", policy=DEFAULT_POLICY):
    """Hu(xi, lift(eta)); ``lift`` must be "h" (horizontal) or "v" (vertical)."""
    if lift not in ("h", "v"):
        raise UnsupportedLift(f"second Hessian argument must be a pure h- or v-lift, got {lift!r}")
    x, y, batch = _prep(x, y)
    xi = np.broadcast_to(np.asarray(xi, dtype=float), batch + (3,)) if np.asarray(xi).ndim == 1 else np.asarray(xi, dtype=float)
    eta = np.broadcast_to(np.asarray(eta, dtype=float), batch + (3,)) if np.asarray(eta).ndim == 1 else np.asarray(eta, dtype=float)
    if lift == "v":
        uj = _field_jets(u, x, y, batch, px=0, py=2)
        duy = np.stack([uj.deriv(_mono(dy=(m,))) for m in range(3)], axis=-1)
        duyy = np.empty(batch + (3, 3))
        for i in range(3):
            for j in range(3):
                duyy[..., i, j] = uj.deriv(_mono(dy=(i, j)))
        geo = geometry_batch(spec, x, y, level="g", policy=policy)
        F = geo.F
        # dF/dy_j = g_jk y^k / F
        ell = np.einsum("...jk,k...->...j", geo.g, y) / F[..., None]
        term1 = F * np.einsum("...j,...j,...i,...i->...", eta, ell, xi, duy)
        term2 = F**2 * np.einsum("...j,...i,...ij->...", eta, xi, duyy)
        return term1 + term2
    geo = geometry_batch(spec, x, y, level="full", policy=policy)
    W, dW_dx, dW_dy, _ = _grad_vec_derivs(u, geo, x, y, batch)
    # delta_k W^j = dW^j/dx_k - N^m_k dW^j/dy_m ; nabla adds Gamma^j_{km} W^m
    deltaW = dW_dx - np.einsum("...mk,...mj->...kj", geo.N, dW_dy)
    covW = deltaW + np.einsum("...jkm,...m->...kj", geo.gamma, W)
    return np.einsum("...l,...jl,...k,...kj->...", xi, geo.g, eta, covW)


def horizontal_divergence(xi: VectorSection, spec, x, y, policy=DEFAULT_POLICY):
    """Dhat(xi) = delta xi^i / delta x_i + Gamma^i_{i m} xi^m."""
    x, y, batch = _prep(x, y)
    geo = geometry_batch(spec, x, y, level="full", policy=policy)
    space = jets.jetspace(1, 1)
    comps = xi.jet(space, x, y, batch)
    val = np.stack([c.value for c in comps], axis=-1)
    dxi_dx = np.empty(batch + (3, 3))  # (..., k, i) = d xi^i / dx_k
    dxi_dy = np.empty(batch + (3, 3))
    for i, c in enumerate(comps):
        for k in range(3):
            dxi_dx[..., k, i] = c.deriv(_mono(dx=(k,)))
            dxi_dy[..., k, i] = c.deriv(_mono(dy=(k,)))
    delta = dxi_dx - np.einsum("...mk,...mi->...ki", geo.N, dxi_dy)
    return np.einsum("...ii->...", delta) + np.einsum("...iim,...m->...", geo.gamma, val)


def horizontal_laplacian(u: ScalarField, spec, x, y, policy=DEFAULT_POLICY, cross_check=True):
    """Positive horizontal Laplacian Lap(u) = -Dhat(grad u).

    Recomputed as -sum_a Hu(e_a, h(e_a)) through an explicit orthonormal
    frame and asserted equal (FormulaMismatch beyond tolerance).
    """
    x, y, batch = _prep(x, y)
    geo = geometry_batch(spec, x, y, level="full", policy=policy)
    W, dW_dx, dW_dy, _ = _grad_vec_derivs(u, geo, x, y, batch)
    deltaW = dW_dx - np.einsum("...mk,...mj->...kj", geo.N, dW_dy)
    covW = deltaW + np.einsum("...jkm,...m->...kj", geo.gamma, W)  # (..., k, j) = nabla_k W^j
    lap = -(np.einsum("...jj->...", covW))
    if cross_check:
        frame = orthonormal_frame(geo.g)
        # Hu(e_a, h(e_a)) = g(e_a, nabla_{h(e_a)} W) summed over the frame
        hu = np.einsum("...al,...jl,...ak,...kj->...", frame, geo.g, frame, covW)
        alt = -hu
        scale = np.maximum(np.maximum(np.abs(lap), np.abs(alt)), 1e-30)
        dev = float(np.max(np.abs(lap - alt) / scale))
        if dev > policy.laplacian_consistency_rtol and float(np.max(np.abs(lap - alt))) > 1e-12:
            raise FormulaMismatch(
                f"horizontal Laplacian routes disagree: rel dev {dev:.3e}"
            )
    return lap


def vertical_laplacian(u: ScalarField, spec, x, y, policy=DEFAULT_POLICY):
    """Positive vertical Laplacian: -sum_a Hu(e_a, v(e_a))."""
    x, y, batch = _prep(x, y)
    if u.direction_independent:
        return np.zeros(batch)
    geo = geometry_batch(spec, x, y, level="g", policy=policy)
    uj = _field_jets(u, x, y, batch, px=0, py=2)
    duy = np.stack([uj.deriv(_mono(dy=(m,))) for m in range(3)], axis=-1)
    duyy = np.empty(batch + (3, 3))
    for i in range(3):
        for j in range(3):
            duyy[..., i, j] = uj.deriv(_mono(dy=(i, j)))
    F = geo.F
    ell = np.einsum("...jk,k...->...j", geo.g, y) / F[..., None]
    # sum_a e_a^i e_a^j = g^{ij}
    t1 = F * np.einsum("...ij,...j,...i->...", geo.g_inv, ell, duy)
    t2 = F**2 * np.einsum("...ij,...ij->...", geo.g_inv, duyy)
    return -(t1 + t2)


def covariant_derivative_k(u: ScalarField, spec, x, y, k, policy=DEFAULT_POLICY):
    """k-th horizontal covariant derivative of u, k in {0, 1, 2}.

    Returns a scalar (k=0), (..., 3) array (k=1) or (..., 3, 3) array (k=2)
    of coordinate components.  Direction-dependent fields get the dN/dx
    contribution through Richardson differences of the connection map.
    """
    if k not in (0, 1, 2):
        raise UnsupportedOrder(f"covariant derivative order {k} not supported (max 2)")
    x, y, batch = _prep(x, y)
    if k == 0:
        uj = _field_jets(u, x, y, batch, px=0, py=0)
        return uj.value + np.zeros(batch)
    if u.direction_independent:
        uj = _field_jets(u, x, y, batch, px=2, py=0)
        du = np.stack([uj.deriv(_mono(dx=(i,))) for i in range(3)], axis=-1)
        if k == 1:
            return du
        geo = geometry_batch(spec, x, y, level="full", policy=policy)
        ddu = np.empty(batch + (3, 3))
        for i in range(3):
            for j in range(3):
                ddu[..., i, j] = uj.deriv(_mono(dx=(i, j)))
        return ddu - np.einsum("...mij,...m->...ij", geo.gamma, du)
    # direction-dependent path
    geo = geometry_batch(spec, x, y, level="full", policy=policy)
    uj = _field_jets(u, x, y, batch, px=2, py=2)
    du = np.stack([uj.deriv(_mono(dx=(i,))) for i in range(3)], axis=-1)
    duy = np.stack([uj.deriv(_mono(dy=(m,))) for m in range(3)], axis=-1)
    nd1 = du - np.einsum("...mj,...m->...j", geo.N, duy)  # (nabla-hat u)_j
    if k == 1:
        return nd1
    dudxx = np.empty(batch + (3, 3))
    dudxy = np.empty(batch + (3, 3))
    duyy = np.empty(batch + (3, 3))
    for i in range(3):
        for j in range(3):
            dudxx[..., i, j] = uj.deriv(_mono(dx=(i, j)))
            dudxy[..., i, j] = uj.deriv(_mono(dx=(i,), dy=(j,)))
            duyy[..., i, j] = uj.deriv(_mono(dy=(i, j)))
    dN_dx = _connection_x_derivative(spec, x, y, batch, policy)
    # d/dx_i (nabla u)_j then the -N^l_i d/dy_l correction and -Gamma term
    d_nd1_dx = (
        dudxx
        - np.einsum("...imj,...m->...ij", dN_dx, duy)
        - np.einsum("...mj,...mi->...ij", geo.N, dudxy)
    )
    # d/dy_l (nabla u)_j = d2u/dy_l dx_j - Gamma^m_{jl} du/dy_m - N^m_j d2u/dy_l dy_m
    d_nd1_dy = (
        np.swapaxes(dudxy, -1, -2)
        - np.einsum("...mjl,...m->...lj", geo.gamma, duy)
        - np.einsum("...mj,...lm->...lj", geo.N, duyy)
    )
    delta_nd1 = d_nd1_dx - np.einsum("...li,...lj->...ij", geo.N, d_nd1_dy)
    return delta_nd1 - np.einsum("...mij,...m->...ij", geo.gamma, nd1)


def _connection_x_derivative(spec, x, y, batch, policy):
    """dN^m_j/dx_i by Richardson differences of the jet-exact N map."""
    h = policy.fd_step
    out = np.empty(batch + (3, 3, 3))  # (..., i, m, j)
    eye = np.eye(3)
    for i in range(3):
        e = eye[i].reshape((3,) + (1,) * len(batch))
        vals = [
            geometry_batch(spec, x + s * h * e, y, level="nonlinear", policy=policy, checks=False).N
            for s in (-2, -1, 1, 2)
        ]
        out[..., i, :, :] = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * h)
    return out


def norm_covariant_k(u: ScalarField, spec, x, y, k, policy=DEFAULT_POLICY):
    """||nabla-hat^k u||, every slot contracted with g^{-1}."""
    t = covariant_derivative_k(u, spec, x, y, k, policy=policy)
    if k == 0:
        return np.abs(t)
    geo = geometry_batch(spec, x, y, level="g", policy=policy)
    if k == 1:
        return np.sqrt(np.einsum("...ij,...i,...j->...", geo.g_inv, t, t))
    return np.sqrt(
        np.einsum("...ia,...jb,...ij,...ab->...", geo.g_inv, geo.g_inv, t, t)
    )
