import numpy as np
import pytest

from conftest import phi_cos, phi_mixed, phi_sin
from finslerlab import conformal, fields, geometry, jets, mesh as meshmod, metrics
from finslerlab.conformal import ConformalFactor, ValueField
from finslerlab.errors import MeshTooCoarse, ModeMismatch, NonPositiveFactor
from finslerlab.fields import ScalarField

RNG = np.random.default_rng(9)


def _random_points(n=20):
    X = RNG.random((3, n))
    Y = RNG.standard_normal((3, n))
    Y[:, np.linalg.norm(Y, axis=0) < 0.2] += 1.0
    return X, Y


def test_identity_deformation(flat_spec):
    one = ConformalFactor(ScalarField.constant(1.0))
    deformed = conformal.conformal_deform(flat_spec, one)
    X, Y = _random_points()
    assert np.allclose(geometry.eval_metric(deformed, X, Y), geometry.eval_metric(flat_spec, X, Y))


def test_constant_factor_scales(flat_spec):
    c = ConformalFactor(ScalarField.constant(1.3))
    deformed = conformal.conformal_deform(flat_spec, c)
    X, Y = _random_points()
    assert np.allclose(
        geometry.eval_metric(deformed, X, Y),
        1.3**2 * geometry.eval_metric(flat_spec, X, Y),
    )


@pytest.mark.parametrize("factor_fn", [phi_sin, phi_cos, phi_mixed])
def test_conformal_scaling_chain(factor_fn, confflat_spec):
    # F~ = phi^2 F, g~ = phi^4 g, eta~ = phi^6 eta at random points, 1e-9
    fac = factor_fn() if factor_fn is phi_mixed else factor_fn(0.1)
    deformed = conformal.conformal_deform(confflat_spec, fac)
    X, Y = _random_points()
    pv = fac.values(X, Y)
    F0 = geometry.eval_metric(confflat_spec, X, Y)
    F1 = geometry.eval_metric(deformed, X, Y)
    assert np.max(np.abs(F1 - pv**2 * F0)) <= 1e-9 * np.max(F1)
    g0 = geometry.fundamental_tensor(confflat_spec, X, Y)
    g1 = geometry.fundamental_tensor(deformed, X, Y)
    assert np.max(np.abs(g1 - pv[:, None, None] ** 4 * g0)) <= 1e-9 * np.max(np.abs(g1))
    Yu = Y / np.linalg.norm(Y, axis=0)
    d0 = conformal.volume_density(confflat_spec, X, Yu)
    d1 = conformal.volume_density(deformed, X, Yu)
    assert np.max(np.abs(d1 - pv**6 * d0)) <= 1e-9 * np.max(d1)


def test_deform_preserves_randers_kind(const_randers_spec):
    fac = phi_sin(0.05)
    deformed = conformal.conformal_deform(const_randers_spec, fac)
    assert deformed.kind == "randers"
    X, Y = _random_points(8)
    pv = fac.values(X, Y)
    F0 = geometry.eval_metric(const_randers_spec, X, Y)
    F1 = geometry.eval_metric(deformed, X, Y)
    assert np.max(np.abs(F1 - pv**2 * F0)) < 1e-12 * np.max(F1)


def test_deform_direction_dependent_factor_generic_kind(flat_spec):
    norm = lambda ys: jets.sqrt(ys[0] * ys[0] + ys[1] * ys[1] + ys[2] * ys[2])
    fac = ConformalFactor(ScalarField(
        lambda xs, ys: 1.0 + 0.05 * ys[0] / norm(ys), direction_independent=False,
        label="dir-dep",
    ))
    deformed = conformal.conformal_deform(flat_spec, fac)
    assert deformed.kind == "closed_form"
    X, Y = _random_points(8)
    pv = fac.values(X, Y)
    F1 = geometry.eval_metric(deformed, X, Y)
    assert np.allclose(F1, pv**2 * geometry.eval_metric(flat_spec, X, Y))


def test_nonpositive_factor_rejected(flat_spec):
    bad = ConformalFactor(ScalarField.from_x_function(
        lambda xs: 0.5 + jets.sin(2 * np.pi * xs[0]), "bad"))
    msh = meshmod.build_mesh(flat_spec, (8, 8, 8), ("single", (1.0, 0, 0)))
    with pytest.raises(NonPositiveFactor):
        conformal.heat_invariants(flat_spec, bad, msh)


def test_volume_density_values(flat_spec, diag_spec):
    X, Y = _random_points(5)
    Yu = Y / np.linalg.norm(Y, axis=0)
    assert np.allclose(conformal.volume_density(flat_spec, X, Yu), 1.0)
    assert np.allclose(conformal.volume_density(diag_spec, X, Yu), 2.0)


def test_scalar_transform_trivial_cases(confflat_spec):
    X, Y = _random_points(6)
    S, _ = geometry.scalar_curvature(confflat_spec, X, Y)
    one = ConformalFactor(ScalarField.constant(1.0))
    s0 = conformal.scalar_transform_values(confflat_spec, one, X, Y)
    assert np.max(np.abs(s0 - S)) < 1e-8 * max(np.max(np.abs(S)), 1.0)
    k = 0.35
    ck = ConformalFactor(ScalarField.constant(np.exp(k / 2)))  # u = k
    sk = conformal.scalar_transform_values(confflat_spec, ck, X, Y)
    assert np.max(np.abs(sk - np.exp(-2 * k) * S)) < 1e-8 * max(np.max(np.abs(S)), 1.0)


def test_scalar_transform_matches_direct(confflat_spec):
    # invariant-connection branch equals the direct deformed curvature on
    # riemannian conformal deformations
    fac = phi_sin(0.1)
    X, Y = _random_points(6)
    pred = conformal.scalar_transform_values(confflat_spec, fac, X, Y)
    direct = conformal.direct_scalar_values(confflat_spec, fac, X, Y)
    assert np.max(np.abs(pred - direct)) <= 1e-5 * max(np.max(np.abs(direct)), 1.0)


def test_yamabe_residual_trivial_and_modes(flat_spec):
    msh = meshmod.build_mesh(flat_spec, (8, 8, 8), ("single", (1.0, 0, 0)))
    one = ConformalFactor(ScalarField.constant(1.0))
    S0 = conformal.ValueField(lambda x, y: np.zeros(np.asarray(x).shape[1:]), True)
    rep = conformal.yamabe_residual(flat_spec, one, S0, msh)
    assert rep.sup_norm < 1e-14

    c = ConformalFactor(ScalarField.constant(1.7))
    Sc = conformal.ValueField(lambda x, y: np.zeros(np.asarray(x).shape[1:]), True)
    repc = conformal.yamabe_residual(flat_spec, c, Sc, msh)
    assert repc.sup_norm < 1e-14  # S = S~ = 0, Lap c = 0

    fac = phi_sin(0.05)
    st = conformal.scalar_transform(flat_spec, fac)
    rep_n3 = conformal.yamabe_residual(flat_spec, fac, st, msh, mode="n3")
    rep_gn = conformal.yamabe_residual(flat_spec, fac, st, msh, mode="general_n", n=3)
    assert rep_n3.sup_norm < 1e-10
    assert abs(rep_n3.sup_norm - rep_gn.sup_norm) < 1e-12
    # eq2 carries the published sign flip: reported verbatim, not reconciled
    rep_eq2 = conformal.yamabe_residual(flat_spec, fac, st, msh, mode="eq2", N=5)
    assert rep_eq2.sup_norm > 1e-2

    with pytest.raises(ModeMismatch):
        conformal.yamabe_residual(flat_spec, fac, st, msh, mode="general_n")
    with pytest.raises(ModeMismatch):
        conformal.yamabe_residual(flat_spec, fac, st, msh, mode="eq2", n=3, N=7)
    with pytest.raises(ModeMismatch):
        conformal.yamabe_residual(flat_spec, fac, st, msh, mode="n3", N=5)


def test_yamabe_self_consistency_direct_curvature(flat_spec):
    # phi = 1 + 0.05 sin(2 pi x1), S~ from the deformed-curvature path
    fac = phi_sin(0.05)
    msh = meshmod.build_mesh(flat_spec, (16, 16, 16), ("single", (1.0, 0, 0)))
    st, _ = conformal.deformed_curvature_samples(flat_spec, fac, msh)
    rep = conformal.yamabe_residual(flat_spec, fac, st, msh, derivative_path="jets")
    assert rep.sup_norm <= 1e-3  # far below the discretization budget


def test_heat_invariants_flat(flat_spec):
    msh = meshmod.build_mesh(flat_spec, (8, 8, 8), ("icosphere", 1))
    one = ConformalFactor(ScalarField.constant(1.0))
    hi = conformal.heat_invariants(flat_spec, one, msh)
    assert hi.a0 == pytest.approx(4 * np.pi, abs=1e-10)
    assert abs(hi.a1) < 1e-12
    assert abs(hi.a2) < 1e-12

    c = ConformalFactor(ScalarField.constant(1.5))
    hic = conformal.heat_invariants(flat_spec, c, msh)
    assert hic.a0 == pytest.approx(4 * np.pi * 1.5**6, rel=1e-12)


def test_heat_invariants_fourier_value(flat_spec):
    msh = meshmod.build_mesh(flat_spec, (8, 8, 8), ("icosphere", 1))
    hi = conformal.heat_invariants(flat_spec, phi_sin(0.1), msh)
    expected = (4.0 / 3.0) * (4 * np.pi) * (0.02 * np.pi**2)
    assert hi.a1 == pytest.approx(expected, rel=1e-6)
    assert hi.a2 >= 0.0
    assert hi.a1_forms_gap <= 1e-8 * max(hi.a1, 1.0)


def test_heat_invariants_predicted_source(flat_spec):
    msh = meshmod.build_mesh(flat_spec, (8, 8, 8), ("single", (1.0, 0, 0)))
    hi_d = conformal.heat_invariants(flat_spec, phi_sin(0.1), msh, stilde_source="direct")
    hi_p = conformal.heat_invariants(flat_spec, phi_sin(0.1), msh, stilde_source="predicted")
    assert hi_p.a2 == pytest.approx(hi_d.a2, rel=1e-8)


def test_mesh_too_coarse(flat_spec):
    msh = meshmod.build_mesh(flat_spec, (8, 8, 8), ("single", (1.0, 0, 0)))
    with pytest.raises(MeshTooCoarse):
        conformal.heat_invariants(flat_spec, phi_sin(0.3), msh, tol=1e-16)


def test_u_field_consistency():
    fac = phi_sin(0.1)
    u = fac.u_field()
    X, Y = _random_points(10)
    assert np.allclose(u.values(X, Y), 2 * np.log(fac.values(X, Y)))
