import numpy as np
import pytest

import oracles
from conftest import np_a_conformally_flat
from finslerlab import fields, geometry, jets
from finslerlab.errors import UnsupportedLift, UnsupportedOrder
from finslerlab.fields import ScalarField, VectorSection

X0 = np.array([0.23, 0.71, 0.11])
Y0 = np.array([0.8, -1.3, 0.4])

U_SIN = ScalarField.from_x_function(lambda xs: jets.sin(2 * np.pi * xs[0]), "sin(2pi x1)")


def test_gradient_constant_zero(flat_spec):
    u = ScalarField.constant(3.0)
    assert np.allclose(fields.gradient(u, flat_spec, X0, Y0), 0.0)


def test_gradient_euclidean_hand(flat_spec):
    g = fields.gradient(U_SIN, flat_spec, X0, Y0)
    assert np.allclose(g, [2 * np.pi * np.cos(2 * np.pi * X0[0]), 0.0, 0.0])


def test_gradient_defining_identity_randers(var_randers_spec):
    # g(grad u, e_k) == du/dx_k for every basis vector
    g = fields.gradient(U_SIN, var_randers_spec, X0, Y0)
    geo = geometry.geometry_batch(var_randers_spec, X0, Y0, level="g")
    lhs = np.einsum("ij,i->j", geo.g, g)
    rhs = np.array([2 * np.pi * np.cos(2 * np.pi * X0[0]), 0.0, 0.0])
    assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_gradient_defect_zero_for_direction_independent(var_randers_spec):
    assert np.max(fields.gradient_defect(U_SIN, var_randers_spec, X0, Y0)) < 1e-14


def test_gradient_defect_nonzero_for_direction_dependent(var_randers_spec):
    u = ScalarField(
        lambda xs, ys: jets.sin(2 * np.pi * xs[0]) * ys[1]
        / jets.sqrt(ys[0] * ys[0] + ys[1] * ys[1] + ys[2] * ys[2]),
        direction_independent=False,
    )
    assert np.max(fields.gradient_defect(u, var_randers_spec, X0, Y0)) > 1e-4


def test_hessian_linear_field_vanishes(flat_spec):
    u = ScalarField.from_x_function(lambda xs: 2.0 * xs[0] - xs[2], "linear")
    for xi in np.eye(3):
        for eta in np.eye(3):
            assert fields.hessian(u, flat_spec, X0, Y0, xi, eta) == pytest.approx(0.0, abs=1e-14)


def test_hessian_x1x2(flat_spec):
    u = ScalarField.from_x_function(lambda xs: xs[0] * xs[1], "x1 x2")
    val = fields.hessian(u, flat_spec, X0, Y0, [1, 0, 0], [0, 1, 0])
    assert val == pytest.approx(1.0)


def test_hessian_bilinear(confflat_spec):
    xi = np.array([0.3, -0.2, 0.9])
    eta = np.array([1.1, 0.4, -0.5])
    h1 = fields.hessian(U_SIN, confflat_spec, X0, Y0, xi, eta)
    h2 = fields.hessian(U_SIN, confflat_spec, X0, Y0, 2 * xi, eta)
    h3 = fields.hessian(U_SIN, confflat_spec, X0, Y0, xi, 3 * eta)
    assert h2 == pytest.approx(2 * h1, rel=1e-10)
    assert h3 == pytest.approx(3 * h1, rel=1e-10)


def test_hessian_rejects_mixed_lift(flat_spec):
    with pytest.raises(UnsupportedLift):
        fields.hessian(U_SIN, flat_spec, X0, Y0, [1, 0, 0], [0, 1, 0], lift="hv")


def test_divergence_constant_zero(flat_spec):
    xi = VectorSection.constant([1.0, 2.0, 3.0])
    assert fields.horizontal_divergence(xi, flat_spec, X0, Y0) == pytest.approx(0.0, abs=1e-14)


def test_divergence_hand(flat_spec):
    xi = VectorSection(lambda xs, ys: (jets.sin(2 * np.pi * xs[0]), 0.0 * xs[0], 0.0 * xs[0]))
    val = fields.horizontal_divergence(xi, flat_spec, X0, Y0)
    assert val == pytest.approx(2 * np.pi * np.cos(2 * np.pi * X0[0]))


def test_divergence_of_gradient_is_minus_laplacian(confflat_spec):
    # Dhat(grad u) == -Lap(u): Eq-consistency between the two operators
    spec = confflat_spec

    def grad_section(xs, ys):
        # grad u = g^{ij} d_i u d_j for u = sin(2 pi x1), a = e^{2w} delta
        w = 0.1 * jets.sin(2 * np.pi * xs[0])
        du = 2 * np.pi * jets.cos(2 * np.pi * xs[0])
        inv = jets.exp(-(w + w))
        return (inv * du, 0.0 * xs[0], 0.0 * xs[0])

    xi = VectorSection(grad_section)
    div = fields.horizontal_divergence(xi, spec, X0, Y0)
    lap = fields.horizontal_laplacian(U_SIN, spec, X0, Y0)
    assert div == pytest.approx(-lap, rel=1e-9)


def test_laplacian_flat_sign_convention(flat_spec):
    lap = fields.horizontal_laplacian(U_SIN, flat_spec, X0, Y0)
    assert lap == pytest.approx(4 * np.pi**2 * np.sin(2 * np.pi * X0[0]))
    const = ScalarField.constant(2.5)
    assert fields.horizontal_laplacian(const, flat_spec, X0, Y0) == pytest.approx(0.0, abs=1e-12)


def test_laplacian_matches_laplace_beltrami_oracle(confflat_spec):
    lap = fields.horizontal_laplacian(U_SIN, confflat_spec, X0, Y0)
    oracle = oracles.laplace_beltrami(
        np_a_conformally_flat, lambda x: np.sin(2 * np.pi * x[0]), X0
    )
    assert lap == pytest.approx(oracle, rel=1e-6)


def test_laplacian_consistency_randers(var_randers_spec):
    # dual-route assertion inside the operator must hold on Finsler specs too
    val = fields.horizontal_laplacian(U_SIN, var_randers_spec, X0, Y0)
    assert np.isfinite(val)


def test_laplacian_locally_minkowski_second_difference(const_randers_spec):
    # direction-dependent g but constant in x: Lap u = -g^{ij}(y) d2u/dxidxj
    u = ScalarField.from_x_function(
        lambda xs: jets.sin(2 * np.pi * xs[0]) * jets.cos(2 * np.pi * xs[1]), "uv"
    )
    lap = fields.horizontal_laplacian(u, const_randers_spec, X0, Y0)
    geo = geometry.geometry_batch(const_randers_spec, X0, Y0, level="g")
    h = 1e-4

    def uval(x):
        return np.sin(2 * np.pi * x[0]) * np.cos(2 * np.pi * x[1])

    dd = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            dd[i, j] = oracles._d2(uval, X0, i, j, h=1e-3)
    expected = -np.einsum("ij,ij->", geo.g_inv, dd)
    assert lap == pytest.approx(expected, rel=1e-6)


def test_vertical_laplacian_direction_independent_zero(var_randers_spec):
    assert fields.vertical_laplacian(U_SIN, var_randers_spec, X0, Y0) == 0.0


def test_vertical_laplacian_sphere_oracle(flat_spec):
    u = ScalarField(
        lambda xs, ys: ys[0] / jets.sqrt(ys[0] * ys[0] + ys[1] * ys[1] + ys[2] * ys[2]),
        direction_independent=False,
    )
    lv = fields.vertical_laplacian(u, flat_spec, X0, Y0)
    oracle = oracles.sphere_laplacian(lambda p: p[0], Y0 / np.linalg.norm(Y0))
    assert lv == pytest.approx(oracle, abs=1e-4)


def test_vertical_laplacian_linearity(flat_spec):
    norm = lambda ys: jets.sqrt(ys[0] * ys[0] + ys[1] * ys[1] + ys[2] * ys[2])
    u = ScalarField(lambda xs, ys: ys[0] / norm(ys), direction_independent=False)
    v = ScalarField(lambda xs, ys: ys[1] * ys[2] / (norm(ys) * norm(ys)), direction_independent=False)
    uv = ScalarField(
        lambda xs, ys: ys[0] / norm(ys) + ys[1] * ys[2] / (norm(ys) * norm(ys)),
        direction_independent=False,
    )
    lu = fields.vertical_laplacian(u, flat_spec, X0, Y0)
    lv_ = fields.vertical_laplacian(v, flat_spec, X0, Y0)
    luv = fields.vertical_laplacian(uv, flat_spec, X0, Y0)
    assert luv == pytest.approx(lu + lv_, rel=1e-10)


def test_covariant_k0_and_norms(flat_spec):
    assert fields.covariant_derivative_k(U_SIN, flat_spec, X0, Y0, 0) == pytest.approx(
        np.sin(2 * np.pi * X0[0])
    )
    n0 = fields.norm_covariant_k(U_SIN, flat_spec, X0, Y0, 0)
    assert n0 == pytest.approx(abs(np.sin(2 * np.pi * X0[0])))
    n1 = fields.norm_covariant_k(U_SIN, flat_spec, X0, Y0, 1)
    assert n1**2 == pytest.approx(4 * np.pi**2 * np.cos(2 * np.pi * X0[0]) ** 2)


def test_covariant_order_cap(flat_spec):
    with pytest.raises(UnsupportedOrder):
        fields.covariant_derivative_k(U_SIN, flat_spec, X0, Y0, 3)


def test_norm2_frame_invariance(confflat_spec):
    # full contraction with g^{-1} is a scalar: invariant under the frame
    t = fields.covariant_derivative_k(U_SIN, confflat_spec, X0, Y0, 2)
    geo = geometry.geometry_batch(confflat_spec, X0, Y0, level="g")
    direct = np.einsum("ia,jb,ij,ab->", geo.g_inv, geo.g_inv, t, t)
    e = geometry.orthonormal_frame(geo.g)
    framed = np.einsum("ai,bj,ij->ab", e, e, t)
    assert direct == pytest.approx(np.sum(framed**2), rel=1e-9)


def test_covariant2_direction_dependent_consistency(var_randers_spec):
    # direction-dependent path must reduce to the simple one on a field that
    # only looks direction-dependent
    u_flagged = ScalarField(
        lambda xs, ys: jets.sin(2 * np.pi * xs[0]) + 0.0 * ys[0],
        direction_independent=False,
    )
    t_dep = fields.covariant_derivative_k(u_flagged, var_randers_spec, X0, Y0, 2)
    t_ind = fields.covariant_derivative_k(U_SIN, var_randers_spec, X0, Y0, 2)
    assert np.max(np.abs(t_dep - t_ind)) < 1e-8


def test_consistency_three_laplacian_routes(confflat_spec, var_randers_spec):
    # Lap u = -Dhat grad u = -sum_a Hu(e_a, h(e_a)) on random samples
    rng = np.random.default_rng(11)
    for spec in (confflat_spec, var_randers_spec):
        for _ in range(50):
            x = rng.random(3)
            y = rng.standard_normal(3)
            if np.linalg.norm(y) < 0.2:
                continue
            lap = fields.horizontal_laplacian(U_SIN, spec, x, y)  # asserts internally
            geo = geometry.geometry_batch(spec, x, y, level="full")
            frame = geometry.orthonormal_frame(geo.g)
            total = 0.0
            for a in range(3):
                total += fields.hessian(U_SIN, spec, x, y, frame[a], frame[a], lift="h")
            assert lap == pytest.approx(-total, rel=1e-8)
