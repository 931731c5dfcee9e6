import numpy as np
import pytest

from conftest import phi_sin
from finslerlab import conformal, geometry, jets, mesh as meshmod, metrics, spectral
from finslerlab.errors import ConstantField, GreenUnavailable, RankDeficiency, StencilOverflow
from finslerlab.fields import ScalarField


def _flat_op(flat_spec, n=8):
    msh = meshmod.build_mesh(flat_spec, (n, n, n), ("single", (1.0, 0, 0)))
    return meshmod, msh, spectral.assemble(flat_spec, msh)


def _symbol_eigenvalues(ginv, density, resolution, spacings):
    """Exact discrete symbol of the averaged forward/backward scheme."""
    n1, n2, n3 = resolution
    vals = []
    for k1 in range(n1):
        for k2 in range(n2):
            for k3 in range(n3):
                th = 2 * np.pi * np.array([k1 / n1, k2 / n2, k3 / n3])
                s = 0.0
                for i in range(3):
                    for j in range(3):
                        s += ginv[i, j] * (
                            np.cos(th[i] - th[j]) - np.cos(th[i]) - np.cos(th[j]) + 1.0
                        ) / (spacings[i] * spacings[j])
                vals.append(s)
    return np.sort(np.array(vals))


def test_operator_invariants(flat_spec):
    _, msh, op = _flat_op(flat_spec)
    A = op.block(0)
    assert abs(A - A.T).max() == 0.0
    ones = np.ones(op.n_nodes)
    assert np.abs(A @ ones).max() < 1e-10
    w = spectral.spectrum(op, 6).eigenvalues
    assert w[0] >= -1e-9 * abs(w).max()


def test_flat_operator_is_seven_point(flat_spec):
    _, msh, op = _flat_op(flat_spec)
    A = op.block(0) / (msh.cellvol * 4 * np.pi)
    h2 = msh.spacings[0] ** 2
    row = A.getrow(0).toarray().ravel()
    assert row[0] == pytest.approx(6.0 / h2)
    assert np.count_nonzero(np.abs(row) > 1e-12) == 7


def test_spectrum_matches_discrete_symbol_flat(flat_spec):
    _, msh, op = _flat_op(flat_spec)
    w = spectral.spectrum(op, 20).eigenvalues
    sym = _symbol_eigenvalues(np.eye(3), 1.0, msh.resolution, msh.spacings)
    assert np.max(np.abs(w - sym[:20])) < 1e-10 * max(sym[19], 1.0)


def test_spectrum_matches_discrete_symbol_anisotropic(const_randers_spec):
    msh = meshmod.build_mesh(const_randers_spec, (8, 8, 8), ("single", (0.0, 1.0, 0.0)))
    op = spectral.assemble(const_randers_spec, msh)
    geo = geometry.geometry_batch(
        const_randers_spec, np.zeros(3), np.array([0.0, 1.0, 0.0]), level="g"
    )
    w = spectral.spectrum(op, 12).eigenvalues
    sym = _symbol_eigenvalues(geo.g_inv, None, msh.resolution, msh.spacings)
    assert np.max(np.abs(w - sym[:12])) < 1e-10 * max(sym[11], 1.0)


def test_spectrum_multiplicities_and_convergence(flat_spec):
    m1 = meshmod.build_mesh(flat_spec, (8, 8, 8), ("single", (1.0, 0, 0)))
    op1 = spectral.assemble(flat_spec, m1)
    w1 = spectral.spectrum(op1, 8).eigenvalues
    assert abs(w1[0]) < 1e-9
    cluster = w1[1:7]
    assert np.ptp(cluster) < 1e-9 * cluster[0]  # multiplicity 6 at |k|^2 = 1
    m2 = meshmod.build_mesh(flat_spec, (16, 16, 16), ("single", (1.0, 0, 0)))
    op2 = spectral.assemble(flat_spec, m2)
    w2 = spectral.spectrum(op2, 8).eigenvalues
    exact = 4 * np.pi**2
    e1, e2 = abs(w1[1] - exact), abs(w2[1] - exact)
    assert 3.0 < e1 / e2 < 5.0  # second-order eigenvalue convergence


def test_spectrum_permutation_invariance(flat_spec):
    _, msh, op = _flat_op(flat_spec, n=4)
    A = op.block(0)
    rng = np.random.default_rng(4)
    perm = rng.permutation(A.shape[0])
    P = np.eye(A.shape[0])[perm]
    Ap = P @ A.toarray() @ P.T
    w = np.sort(np.linalg.eigvalsh(Ap / (msh.cellvol * 4 * np.pi)))
    w0 = np.sort(np.linalg.eigvalsh(A.toarray() / (msh.cellvol * 4 * np.pi)))
    assert np.max(np.abs(w - w0)) < 1e-8


def test_integration_by_parts_weak_form(confflat_spec):
    msh = meshmod.build_mesh(confflat_spec, (8, 8, 8), ("single", (1.0, 0, 0)))
    op = spectral.assemble(confflat_spec, msh)
    rng = np.random.default_rng(7)
    u = rng.standard_normal((op.n_nodes, 1))
    v = rng.standard_normal((op.n_nodes, 1))
    lap_u = op.apply(u)
    lhs = float((lap_u * v * op.measure).sum())
    rhs = op.energy(u, v)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_strong_weak_cross_validation(confflat_spec):
    # discrete operator vs pointwise jets Laplacian on a smooth field: O(h^2)
    from finslerlab.conformal import _lap_on_mesh
    from finslerlab.policy import DEFAULT_POLICY

    u = ScalarField.from_x_function(lambda xs: jets.sin(2 * np.pi * xs[0]), "sin")
    errs = []
    for n in (8, 16):
        msh = meshmod.build_mesh(confflat_spec, (n, n, n), ("single", (1.0, 0, 0)))
        op = spectral.assemble(confflat_spec, msh)
        sf = meshmod.sample_scalar(u, msh)
        disc = op.apply(sf.values)
        point = _lap_on_mesh(u, confflat_spec, msh, DEFAULT_POLICY)
        errs.append(np.max(np.abs(disc - point)))
    assert errs[1] < errs[0] / 3.0


def test_rayleigh_quotient(flat_spec):
    _, msh, op = _flat_op(flat_spec, n=8)
    lam1 = spectral.lambda1(op)
    x1 = msh.xgrid[0]
    psi = np.sin(2 * np.pi * x1)
    q = spectral.rayleigh_lambda1(op, psi[:, None])
    assert q == pytest.approx(lam1, rel=1e-12)  # exact first eigenvector on the grid
    q_shift = spectral.rayleigh_lambda1(op, (psi + 4.2)[:, None])
    assert q_shift == pytest.approx(q, abs=1e-10)
    rng = np.random.default_rng(12)
    for _ in range(10):
        v = rng.standard_normal(op.n_nodes)
        assert spectral.rayleigh_lambda1(op, v[:, None]) >= lam1 - 1e-9 * lam1
    with pytest.raises(ConstantField):
        spectral.rayleigh_lambda1(op, np.full((op.n_nodes, 1), 2.0))


def test_isospectral_compare_identity_and_deformed(flat_spec):
    rep = spectral.isospectral_compare(flat_spec, flat_spec, (8, 8, 8), ("single", (1.0, 0, 0)), 10, 1e-10)
    assert rep.verdict and rep.max_rel_gap <= 1e-10
    fac = phi_sin(0.1)
    deformed = conformal.conformal_deform(flat_spec, fac)
    rep2 = spectral.isospectral_compare(flat_spec, deformed, (8, 8, 8), ("single", (1.0, 0, 0)), 10, 1e-3)
    assert not rep2.verdict


def test_isospectral_relabeled_axes(flat_spec):
    # permuting the axes of the flat torus is an isometry
    swapped = metrics.riemannian_constant(np.diag([1.0, 1.0, 1.0]), label="relabeled")
    rep = spectral.isospectral_compare(flat_spec, swapped, (6, 6, 6), ("single", (1.0, 0, 0)), 8, 1e-10)
    assert rep.verdict


def test_coupled_mode_stencil_overflow(flat_spec):
    msh = meshmod.build_mesh(flat_spec, (4, 4, 4), ("icosphere", 0))
    with pytest.raises(StencilOverflow):
        spectral.assemble(flat_spec, msh, coupling="coupled")
    op = spectral.assemble(flat_spec, msh, coupling="frozen_fallback")
    assert any("frozen" in w for w in op.warnings)


def test_green_properties(flat_spec):
    _, msh, op = _flat_op(flat_spec, n=6)
    G = spectral.green_function(op)
    assert np.abs(G.G - G.G.T).max() <= 1e-10
    assert np.abs(G.G @ G.measure).max() <= 1e-9
    x1 = msh.xgrid[0]
    for f in (np.sin(2 * np.pi * x1), np.cos(2 * np.pi * msh.xgrid[1]),
              np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * msh.xgrid[2])):
        rec = spectral.green_reproduce(G, f, op)
        assert np.max(np.abs(rec - f)) <= 1e-8
    # op G = I - measure projection onto constants
    mvec = G.measure
    P = np.eye(op.n_nodes) - np.outer(mvec, np.ones(op.n_nodes)) / mvec.sum()
    assert np.max(np.abs(op.block(0).toarray() @ G.G - P)) <= 1e-9


def test_green_size_limit(flat_spec):
    msh = meshmod.build_mesh(flat_spec, (17, 17, 17), ("single", (1.0, 0, 0)))
    op = spectral.assemble(flat_spec, msh)
    with pytest.raises(GreenUnavailable):
        spectral.green_function(op)


def test_green_apply_matches_dense(flat_spec):
    _, msh, op = _flat_op(flat_spec, n=6)
    G = spectral.green_function(op)
    rng = np.random.default_rng(3)
    f = rng.standard_normal(op.n_nodes)
    dense = G.G @ (G.measure * (f - (f * G.measure).sum() / G.measure.sum()))
    dense -= (dense * G.measure).sum() / G.measure.sum()
    it = spectral.green_apply(op, f)
    assert np.max(np.abs(dense - it)) < 1e-9 * max(np.max(np.abs(dense)), 1.0)


def test_rank_deficiency_detected(flat_spec):
    # an operator with a kernel beyond constants must be refused
    import scipy.sparse as sp

    msh = meshmod.build_mesh(flat_spec, (4, 4, 4), ("single", (1.0, 0, 0)))
    op = spectral.assemble(flat_spec, msh)
    # decouple one node entirely: its indicator joins the kernel
    A = op.blocks[0].tolil()
    A[0, :] = 0.0
    A[:, 0] = 0.0
    bad = spectral.DiscreteOperator(
        mesh=msh,
        blocks=[A.tocsr()],
        block_of_direction=op.block_of_direction,
        measure=op.measure,
    )
    with pytest.raises(RankDeficiency):
        spectral.green_function(bad)


def test_spectrum_csv_and_export(tmp_path, flat_spec):
    _, msh, op = _flat_op(flat_spec, n=4)
    sp_ = spectral.spectrum(op, 5)
    rows = spectral.spectrum_csv_rows(sp_)
    assert rows[0]["index"] == 0
    path = tmp_path / "op.txt"
    spectral.export_operator_coo(op, path)
    text = path.read_text().splitlines()
    assert text[0].startswith("#")
    assert len(text) > 10
