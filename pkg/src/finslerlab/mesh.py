r"""Discretization of the sphere bundle: periodic x-grid times direction sphere.

A mesh is a lexicographic (n1, n2, n3) lattice over the periodic chart paired
with a finite direction set carrying sphere quadrature weights that sum to
4*pi.  The volume-form density sqrt(det g(x, y)) is tabulated per (node,
direction), so ``integrate`` is a plain weighted sum reproducing
``int f eta_F`` over SM.

Direction rules: subdivided-icosahedron vertices with spherical-Voronoi
equal-area weights (default), a Gauss-Legendre theta x uniform phi product
grid, and a single frozen direction of weight 4*pi for spectral work.

Sampled fields store one value per (node, direction); x-derivatives of
sampled data use 4th-order periodic central stencils, while closed-form
fields go through jets.  Sobolev norms are offered in both published forms
(the sum-of-norms "definition" form and the root-of-sum-of-squares W^{2,2}
form), labeled distinctly since they are inequivalent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import hashlib
import numpy as np
from scipy.spatial import SphericalVoronoi

from .errors import (
    DegenerateMetric,
    DirectionJetsUnavailable,
    MeshMismatch,
    RequestRejected,
    UnsupportedOrder,
)
from .geometry import geometry_batch
from .policy import DEFAULT_POLICY

_BINARY_MAGIC = b"FLSM0001"


# -- direction sets -----------------------------------------------------------


def _icosahedron():
    t = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    v /= np.linalg.norm(v, axis=1)[:, None]
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return v, f


def icosphere_directions(subdivisions: int = 1):
    """Unit vectors and equal-area (spherical Voronoi) weights, sum = 4*pi."""
    v, f = _icosahedron()
    verts = [row for row in v]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                m = m / np.linalg.norm(m)
                verts.append(m)
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            nf += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        f = np.array(nf)
    dirs = np.array(verts)
    areas = SphericalVoronoi(dirs, radius=1.0).calculate_areas()
    w = areas * (4.0 * np.pi / areas.sum())
    return dirs, w


def product_grid_directions(n_theta: int, n_phi: int):
    """Gauss-Legendre in cos(theta) x uniform phi; weights sum to 4*pi."""
    nodes, wts = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(nodes)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    dirs, w = [], []
    for t, wt in zip(theta, wts):
        for p in phi:
            dirs.append([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)])
            w.append(wt * 2.0 * np.pi / n_phi)
    dirs = np.array(dirs)
    w = np.array(w)
    return dirs, w * (4.0 * np.pi / w.sum())


def single_direction(direction=(1.0, 0.0, 0.0)):
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    return d[None, :], np.array([4.0 * np.pi])


def make_directions(rule):
    """rule: ("icosphere", k) | ("product", nt, np) | ("single", (d1,d2,d3))."""
    kind = rule[0]
    if kind == "icosphere":
        return icosphere_directions(int(rule[1]))
    if kind == "product":
        return product_grid_directions(int(rule[1]), int(rule[2]))
    if kind == "single":
        return single_direction(rule[1] if len(rule) > 1 else (1.0, 0.0, 0.0))
    raise RequestRejected(f"unknown direction rule {rule!r}")


# -- the mesh -----------------------------------------------------------------


@dataclass
class SphereBundleMesh:
    spec: object
    resolution: tuple
    xgrid: np.ndarray          # (3, N) lexicographic nodes
    directions: np.ndarray     # (D, 3)
    weights: np.ndarray        # (D,)
    density: np.ndarray        # (N, D) eta_F density sqrt(det g)
    cellvol: float
    rule: tuple
    total_volume: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def n_nodes(self):
        return self.xgrid.shape[1]

    @property
    def n_directions(self):
        return self.directions.shape[0]

    @property
    def spacings(self):
        return tuple(p / n for p, n in zip(self.spec.chart.periods, self.resolution))

    def measure(self):
        """Quadrature measure per (node, direction): density*cellvol*weight."""
        return self.density * self.cellvol * self.weights[None, :]

    def integrate_values(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape != self.density.shape:
            values = np.broadcast_to(values.reshape(values.shape + (1,) * (2 - values.ndim)),
                                     self.density.shape)
        return float(np.sum(values * self.measure()))

    def grid_shape(self):
        return tuple(self.resolution)

    def fingerprint(self):
        key = f"{self.spec.fingerprint()}|{self.resolution}|{self.rule}"
        return hashlib.md5(key.encode()).hexdigest()


def build_mesh(spec, resolution, direction_rule=("icosphere", 1), policy=DEFAULT_POLICY):
    """Build the discretized sphere bundle with tabulated densities."""
    resolution = tuple(int(n) for n in resolution)
    if len(resolution) != 3 or any(n < 4 for n in resolution):
        raise RequestRejected(f"resolution {resolution} below the minimum of 4 per axis")
    dirs, w = make_directions(direction_rule)
    axes = [np.arange(n) * (p / n) for n, p in zip(resolution, spec.chart.periods)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=0).reshape(3, -1)
    N, D = grid.shape[1], dirs.shape[0]

    def _density_of(X, Y):
        # pre-scan F so a degenerate node is reported with its coordinates
        f = spec.f(tuple(X[i] for i in range(3)), tuple(Y[i] for i in range(3)))
        fval = np.asarray(f.value if hasattr(f, "value") else f, dtype=float)
        if np.any(~np.isfinite(fval)) or np.any(fval <= 0):
            flat = np.argwhere(~((fval > 0) & np.isfinite(fval)))[0]
            loc = X[(slice(None),) + tuple(flat)]
            raise DegenerateMetric(
                f"metric not positive at node x={np.asarray(loc).ravel().tolist()}"
            )
        geo = geometry_batch(spec, X, Y, level="g", policy=policy, checks=False)
        det = np.linalg.det(geo.g)
        if np.any(det <= 0):
            flat = np.argwhere(det <= 0)[0]
            loc = X[(slice(None),) + tuple(flat)]
            raise DegenerateMetric(
                f"non-positive volume density at node x={np.asarray(loc).ravel().tolist()}"
            )
        return np.sqrt(det)

    if spec.direction_independent_geometry:
        density = np.repeat(_density_of(grid, np.broadcast_to(dirs[0][:, None], grid.shape))[:, None], D, axis=1)
    else:
        density = np.empty((N, D))
        chunk = max(1, 200_000 // max(D, 1))
        for s in range(0, N, chunk):
            sl = slice(s, min(s + chunk, N))
            nb = sl.stop - sl.start
            X = np.repeat(grid[:, sl, None], D, axis=2)
            Y = np.broadcast_to(dirs.T[:, None, :], (3, nb, D))
            density[sl] = _density_of(X, Y)
    mesh = SphereBundleMesh(
        spec=spec,
        resolution=resolution,
        xgrid=grid,
        directions=dirs,
        weights=w,
        density=density,
        cellvol=float(np.prod([p / n for p, n in zip(spec.chart.periods, resolution)])),
        rule=tuple(direction_rule if isinstance(direction_rule, (list, tuple)) else (direction_rule,)),
    )
    mesh.total_volume = mesh.integrate_values(np.ones((N, D)))
    return mesh


# -- sampled fields -----------------------------------------------------------


@dataclass
class SampledField:
    values: np.ndarray  # (N, D)
    mesh: SphereBundleMesh
    label: str = ""
    direction_independent: bool = False

    def column(self, d=0):
        return self.values[:, d]


def sample_scalar(u, mesh: SphereBundleMesh) -> SampledField:
    """Evaluate a closed-form ScalarField on every (node, direction)."""
    N, D = mesh.n_nodes, mesh.n_directions
    if u.direction_independent:
        vals = u.values(mesh.xgrid, np.broadcast_to(mesh.directions[0][:, None], mesh.xgrid.shape))
        vals = np.repeat(np.asarray(vals, dtype=float)[:, None], D, axis=1)
    else:
        X = np.repeat(mesh.xgrid[:, :, None], D, axis=2)
        Y = np.broadcast_to(mesh.directions.T[:, None, :], (3, N, D))
        vals = np.asarray(u.values(X, Y), dtype=float)
    return SampledField(vals, mesh, label=u.label, direction_independent=u.direction_independent)


def integrate(f, mesh: SphereBundleMesh):
    """int f eta_F over the discrete sphere bundle."""
    if isinstance(f, SampledField):
        if f.mesh is not mesh and f.mesh.fingerprint() != mesh.fingerprint():
            raise MeshMismatch("sampled field belongs to a different mesh")
        vals = f.values
    else:
        vals = np.asarray(f, dtype=float)
    return mesh.integrate_values(vals)


def quadrature_error_estimate(values, mesh: SphereBundleMesh):
    """|full - stride-2 subgrid| quadrature difference; 0 if not refinable."""
    n1, n2, n3 = mesh.resolution
    if any(n % 2 for n in (n1, n2, n3)):
        return 0.0
    vals = np.asarray(values, dtype=float).reshape(n1, n2, n3, -1)
    dens = mesh.density.reshape(n1, n2, n3, -1)
    sub = (slice(None, None, 2),) * 3
    coarse = np.sum(
        vals[sub] * dens[sub] * (8.0 * mesh.cellvol) * mesh.weights[None, None, None, :]
    )
    full = np.sum(vals * dens * mesh.cellvol * mesh.weights[None, None, None, :])
    return float(abs(full - coarse))


# -- grid stencils (4th order, periodic) ---------------------------------------


def _roll(a, shift, axis):
    return np.roll(a, -shift, axis=axis)


def grid_derivative(values, mesh: SphereBundleMesh, axis: int, order: int = 1):
    """4th-order periodic stencil d/dx_axis (order 1) or d2/dx_axis2 (order 2)."""
    n1, n2, n3 = mesh.resolution
    h = mesh.spacings[axis]
    a = np.asarray(values, dtype=float).reshape(n1, n2, n3, -1)
    if order == 1:
        out = (-_roll(a, 2, axis) + 8 * _roll(a, 1, axis) - 8 * _roll(a, -1, axis) + _roll(a, -2, axis)) / (12 * h)
    elif order == 2:
        out = (-_roll(a, 2, axis) + 16 * _roll(a, 1, axis) - 30 * a + 16 * _roll(a, -1, axis) - _roll(a, -2, axis)) / (12 * h * h)
    else:
        raise UnsupportedOrder("stencil orders 1 and 2 only")
    return out.reshape(-1, a.shape[-1])


def sampled_covariant(f: SampledField, spec, k, policy=DEFAULT_POLICY):
    """nabla-hat^k of a sampled field via grid stencils, k in {0, 1, 2}.

    Requires direction-independent samples when the nonlinear connection is
    nonzero, since direction derivatives are unavailable on scattered
    direction sets.
    """
    if k not in (0, 1, 2):
        raise UnsupportedOrder(f"covariant derivative order {k} not supported (max 2)")
    mesh = f.mesh
    vals = f.values
    if not f.direction_independent:
        colgap = float(np.max(np.abs(vals - vals[:, :1]))) if mesh.n_directions > 1 else 0.0
        if colgap > 1e-12:
            raise DirectionJetsUnavailable(
                "sampled field varies across directions; grid stencils cannot "
                "supply the direction derivatives in delta/delta x"
            )
    if k == 0:
        return vals
    du = np.stack([grid_derivative(vals, mesh, ax, 1) for ax in range(3)], axis=-1)  # (N, D, 3)
    if k == 1:
        return du
    ddu = np.empty(vals.shape + (3, 3))
    for i in range(3):
        for j in range(i, 3):
            if i == j:
                ddu[..., i, i] = grid_derivative(vals, mesh, i, 2)
            else:
                dij = grid_derivative(du[..., j], mesh, i, 1)
                ddu[..., i, j] = ddu[..., j, i] = dij
    gamma = geometry_fields(spec, mesh, policy)["gamma"]
    return ddu - np.einsum("ndmij,ndm->ndij", gamma, du)


_GEOM_CACHE = {}


def geometry_fields(spec, mesh: SphereBundleMesh, policy=DEFAULT_POLICY):
    """Full-level geometry arrays tabulated over the mesh, cached per mesh.

    Returns dict with g, g_inv, gamma, N, F of shape (N, D, ...); for
    direction-independent geometry one direction is computed and broadcast.
    """
    key = (id(mesh), mesh.fingerprint())
    if key in _GEOM_CACHE:
        return _GEOM_CACHE[key]
    N, D = mesh.n_nodes, mesh.n_directions
    if spec.direction_independent_geometry:
        geo = geometry_batch(spec, mesh.xgrid, mesh.directions[0][:, None], level="full", policy=policy)
        out = {
            "g": np.repeat(geo.g[:, None], D, axis=1),
            "g_inv": np.repeat(geo.g_inv[:, None], D, axis=1),
            "gamma": np.repeat(geo.gamma[:, None], D, axis=1),
            "N": np.repeat(geo.N[:, None], D, axis=1),
            "F": np.repeat(geo.F[:, None], D, axis=1),
        }
    else:
        gs, gis, gams, Ns, Fs = [], [], [], [], []
        chunk = max(1, 100_000 // max(D, 1))
        for s in range(0, N, chunk):
            sl = slice(s, min(s + chunk, N))
            nb = sl.stop - sl.start
            X = np.repeat(mesh.xgrid[:, sl, None], D, axis=2)
            Y = np.broadcast_to(mesh.directions.T[:, None, :], (3, nb, D))
            geo = geometry_batch(spec, X, Y, level="full", policy=policy, checks=False)
            gs.append(geo.g)
            gis.append(geo.g_inv)
            gams.append(geo.gamma)
            Ns.append(geo.N)
            Fs.append(geo.F)
        out = {
            "g": np.concatenate(gs),
            "g_inv": np.concatenate(gis),
            "gamma": np.concatenate(gams),
            "N": np.concatenate(Ns),
            "F": np.concatenate(Fs),
        }
    _GEOM_CACHE[key] = out
    if len(_GEOM_CACHE) > 8:
        _GEOM_CACHE.pop(next(iter(_GEOM_CACHE)))
    return out


def covariant_samples(u, spec, mesh: SphereBundleMesh, k, policy=DEFAULT_POLICY):
    """nabla-hat^k u tabulated over the mesh; jets for closed-form fields."""
    from .fields import covariant_derivative_k

    if isinstance(u, SampledField):
        return sampled_covariant(u, spec, k, policy)
    N, D = mesh.n_nodes, mesh.n_directions
    if u.direction_independent and spec.direction_independent_geometry:
        t = covariant_derivative_k(u, spec, mesh.xgrid, mesh.directions[0][:, None], k, policy=policy)
        return np.repeat(t[:, None, ...], D, axis=1)
    X = np.repeat(mesh.xgrid[:, :, None], D, axis=2)
    Y = np.broadcast_to(mesh.directions.T[:, None, :], (3, N, D))
    return covariant_derivative_k(u, spec, X, Y, k, policy=policy)


def covariant_norm2_samples(u, spec, mesh: SphereBundleMesh, k, policy=DEFAULT_POLICY):
    """||nabla-hat^k u||^2 per (node, direction), g-contracted."""
    t = covariant_samples(u, spec, mesh, k, policy)
    if k == 0:
        return np.asarray(t) ** 2
    gi = geometry_fields(spec, mesh, policy)["g_inv"]
    if k == 1:
        return np.einsum("ndij,ndi,ndj->nd", gi, t, t)
    return np.einsum("ndia,ndjb,ndij,ndab->nd", gi, gi, t, t)


def sobolev_norm(f, mesh: SphereBundleMesh, spec, k=2, p=2, form="definition52", policy=DEFAULT_POLICY):
    """W^{k,p} norm of f over the mesh.

    ``form="definition52"`` gives sum_i ||nabla-hat^i f||_p (the Sobolev-space
    definition); ``form="eq1000"`` gives the quadratic W^{2,2} combination
    (sqrt of the summed squared L^2 norms, p forced to 2).  The two are
    inequivalent; callers must pick explicitly.
    """
    if k > 2 or k < 0:
        raise UnsupportedOrder(f"Sobolev order {k} not supported (max 2)")
    if p < 1:
        raise UnsupportedOrder("p must be >= 1")
    norms2 = [covariant_norm2_samples(f, spec, mesh, i, policy) for i in range(k + 1)]
    if form == "eq1000":
        return float(np.sqrt(sum(mesh.integrate_values(n2) for n2 in norms2)))
    if form != "definition52":
        raise UnsupportedOrder(f"unknown Sobolev form {form!r}")
    total = 0.0
    for n2 in norms2:
        lp = mesh.integrate_values(np.power(np.maximum(n2, 0.0), p / 2.0))
        total += lp ** (1.0 / p)
    return float(total)


def field_extrema(f, mesh: SphereBundleMesh):
    """(min, argmin, max, argmax); arg* = (node index, direction index, x).

    Ties resolve to the first entry in node-major order.
    """
    vals = f.values if isinstance(f, SampledField) else np.asarray(f, dtype=float)
    flat_min = int(np.argmin(vals))
    flat_max = int(np.argmax(vals))
    D = mesh.n_directions
    locs = []
    for flat in (flat_min, flat_max):
        node, d = divmod(flat, D)
        locs.append((node, d, mesh.xgrid[:, node].copy()))
    return float(vals.flat[flat_min]), locs[0], float(vals.flat[flat_max]), locs[1]


# -- serialization --------------------------------------------------------------


def save_mesh_binary(mesh: SphereBundleMesh, path):
    """Documented flat layout: magic, resolutions, D, periods, directions,
    weights, then row-major density."""
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC)
        np.array(mesh.resolution + (mesh.n_directions,), dtype=np.int64).tofile(fh)
        np.asarray(mesh.spec.chart.periods, dtype=np.float64).tofile(fh)
        mesh.directions.astype(np.float64).tofile(fh)
        mesh.weights.astype(np.float64).tofile(fh)
        mesh.density.astype(np.float64).tofile(fh)


def load_mesh_binary(path):
    """Read back the flat layout; returns a dict of raw arrays."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_BINARY_MAGIC))
        if magic != _BINARY_MAGIC:
            raise MeshMismatch("not a mesh binary file")
        hdr = np.fromfile(fh, dtype=np.int64, count=4)
        n1, n2, n3, D = (int(v) for v in hdr)
        periods = np.fromfile(fh, dtype=np.float64, count=3)
        dirs = np.fromfile(fh, dtype=np.float64, count=3 * D).reshape(D, 3)
        w = np.fromfile(fh, dtype=np.float64, count=D)
        density = np.fromfile(fh, dtype=np.float64, count=n1 * n2 * n3 * D).reshape(n1 * n2 * n3, D)
    return {
        "resolution": (n1, n2, n3),
        "periods": tuple(periods),
        "directions": dirs,
        "weights": w,
        "density": density,
    }


def save_field_csv(f: SampledField, path):
    mesh = f.mesh
    with open(path, "w") as fh:
        fh.write("node,direction,x1,x2,x3,d1,d2,d3,value\n")
        for node in range(mesh.n_nodes):
            x = mesh.xgrid[:, node]
            for d in range(mesh.n_directions):
                v = mesh.directions[d]
                fh.write(
                    f"{node},{d},{x[0]:.12g},{x[1]:.12g},{x[2]:.12g},"
                    f"{v[0]:.12g},{v[1]:.12g},{v[2]:.12g},{f.values[node, d]:.17g}\n"
                )
