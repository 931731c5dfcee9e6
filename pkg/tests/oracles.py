"""Independent classical-Riemannian oracle (finite differences, no jets).

Used to check the generic Finsler kernel on riemannian specs: Christoffel
symbols, Riemann/Ricci/scalar curvature, Laplace-Beltrami — all from the
coefficient matrix a_ij(x) alone, differentiated by 4th-order central
differences.  Deliberately shares no code with the package's jet pipeline.
"""

from math import fsum

import numpy as np

_H = 1e-3


def _d1(f, x, i, h=_H):
    e = np.zeros(3)
    e[i] = 1.0
    return (f(x - 2 * h * e) - 8 * f(x - h * e) + 8 * f(x + h * e) - f(x + 2 * h * e)) / (12 * h)


def _d2(f, x, i, j, h=_H):
    if i == j:
        e = np.zeros(3)
        e[i] = 1.0
        return (
            -f(x + 2 * h * e) + 16 * f(x + h * e) - 30 * f(x)
            + 16 * f(x - h * e) - f(x - 2 * h * e)
        ) / (12 * h * h)
    return _d1(lambda z: _d1(f, z, j, h), x, i, h)


def christoffel(a_fn, x):
    """Gamma^c_ab = 1/2 a^{cd} (d_a a_bd + d_b a_da - d_d a_ab)."""
    a = a_fn(x)
    ainv = np.linalg.inv(a)
    da = np.array([_d1(a_fn, x, k) for k in range(3)])  # (k, i, j) = d_k a_ij
    G = np.empty((3, 3, 3))
    for c in range(3):
        for i in range(3):
            for j in range(3):
                G[c, i, j] = 0.5 * fsum(
                    ainv[c, d] * (da[i, j, d] + da[j, d, i] - da[d, i, j])
                    for d in range(3)
                )
    return G


def riemann_lowered(a_fn, x):
    """R_ijkl with R(X,Y)Z conventions matching g_ik g_jl - g_il g_jk on the
    unit sphere; computed from FD of the Christoffel map."""
    a = a_fn(x)
    G = christoffel(a_fn, x)
    dG = np.array([_d1(lambda z: christoffel(a_fn, z), x, k) for k in range(3)])
    # R^i_jkl = d_k G^i_jl - d_l G^i_jk + G^i_mk G^m_jl - G^i_ml G^m_jk
    Rup = np.empty((3, 3, 3, 3))
    for i in range(3):
        for j in range(3):
            for k in range(3):
                for l in range(3):
                    Rup[i, j, k, l] = (
                        dG[k, i, j, l] - dG[l, i, j, k]
                        + fsum(G[i, m, k] * G[m, j, l] for m in range(3))
                        - fsum(G[i, m, l] * G[m, j, k] for m in range(3))
                    )
    return np.einsum("im,mjkl->ijkl", a, Rup)


def ricci(a_fn, x):
    a = a_fn(x)
    R = riemann_lowered(a_fn, x)
    return np.einsum("jm,pjqm->pq", np.linalg.inv(a), R)


def scalar_curvature(a_fn, x):
    a = a_fn(x)
    return float(np.einsum("pq,pq->", np.linalg.inv(a), ricci(a_fn, x)))


def laplace_beltrami(a_fn, u_fn, x):
    """Positive Laplacian -(1/sqrt(det a)) d_i (sqrt(det a) a^{ij} d_j u)."""

    def flux(z, i):
        a = a_fn(z)
        s = np.sqrt(np.linalg.det(a))
        ainv = np.linalg.inv(a)
        return s * fsum(ainv[i, j] * _d1(u_fn, z, j) for j in range(3))

    a = a_fn(x)
    s = np.sqrt(np.linalg.det(a))
    return -fsum(_d1(lambda z: flux(z, i), x, i) for i in range(3)) / s


def sphere_laplacian(u_fn, y_unit, n_theta=400):
    """Positive sphere Laplacian of u (degree-0 extension) at a unit vector,
    via a local 2nd-order stencil in rotated spherical coordinates."""
    y = np.asarray(y_unit, dtype=float)
    y = y / np.linalg.norm(y)
    # orthonormal tangent basis at y
    t = np.array([1.0, 0.0, 0.0])
    if abs(y @ t) > 0.9:
        t = np.array([0.0, 1.0, 0.0])
    e1 = t - (t @ y) * y
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(y, e1)
    h = np.pi / n_theta

    def val(a, b):
        # geodesic-normal coordinates: exp map on the sphere
        r = np.hypot(a, b)
        if r < 1e-300:
            return u_fn(y)
        d = (a * e1 + b * e2) / r
        p = np.cos(r) * y + np.sin(r) * d
        return u_fn(p)

    # Laplace-Beltrami in geodesic polars ~ flat Laplacian at the pole
    lap = (val(h, 0) + val(-h, 0) + val(0, h) + val(0, -h) - 4 * val(0, 0)) / h**2
    return -lap
