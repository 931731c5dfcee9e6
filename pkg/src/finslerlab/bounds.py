r"""Numerical instantiation of the a priori estimates behind the compactness result.

Each "identity" below is evaluated through two independent code paths (jet
integrands against the spectrally exact periodic quadrature, or exact
discrete weak-form pairings where stated) and reported with its residual;
each "inequality" is reported with its slack.  The theorem probe reports
measured envelopes over a family of conformal factors — the constants of the
theorem are existential, so no certified constants are claimed.

Sign conventions follow the positive (geometer's) horizontal Laplacian
throughout; where the source proofs carry analyst-sign steps, the corrected
form is implemented and the original is quoted in the docstring:

* expansion middle term: I2 = +16 int S phi^-3 Lap(phi) eta (source prints
  "-16 int ..."), whose integration-by-parts form is the printed
  -48 S int |grad phi|^2 phi^-4 eta;
* reciprocal chain rule: Lap(1/phi) = -phi^-2 Lap(phi) - 2 |grad phi|^2/phi^3
  (source prints "+ 2 |grad phi|^2/phi^3");
* Green representation uses +Lap, matching Aubin's reproduction identity;
* energy identity: 8 int phi^{1+2e} Lap(phi) = +(8(1+2e)/(1+e)^2)
  int |grad phi-hat|^2 (source prints a minus).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .conformal import (
    ConformalFactor,
    _factor,
    conformal_deform,
    deformed_curvature_samples,
    heat_invariants,
    scalar_field_samples,
    _lap_on_mesh,
)
from .errors import (
    EmptyFamily,
    EpsilonOutOfRange,
    InvalidEpsilon,
    NonConstantScalarCurvature,
    NonPositiveFactor,
)
from .fields import ScalarField
from .jets import power as jet_power
from .mesh import (
    SphereBundleMesh,
    build_mesh,
    covariant_norm2_samples,
    field_extrema,
    sample_scalar,
    sobolev_norm,
)
from .policy import DEFAULT_POLICY
from .spectral import GreenMatrix, assemble, green_apply, lambda1


def _phi_samples(fac: ConformalFactor, mesh: SphereBundleMesh):
    pv = sample_scalar(fac.phi, mesh).values
    if np.any(pv <= 0):
        raise NonPositiveFactor(f"factor {fac.label} not positive on the mesh")
    return pv


def _power_field(fac: ConformalFactor, p: float, label=None) -> ScalarField:
    fn = fac.phi.fn
    return ScalarField(
        lambda xs, ys: jet_power(fn(xs, ys), p),
        fac.phi.direction_independent,
        label or f"{fac.label}^{p}",
    )


@dataclass
class Lemma51Record:
    int_phi2: float
    int_phi6: float
    holder_bound: float
    holder_slack: float
    int_grad2: float
    a1: float
    int_S_phi2: float
    identity_residual: float


def lemma51_bounds(phi, spec, mesh: SphereBundleMesh, policy=DEFAULT_POLICY,
                   precomputed=None) -> Lemma51Record:
    """Hoelder chain for int phi^2 and the a1-form of the gradient energy.

    Checks int phi^2 eta <= (int phi^6 eta)^{1/3} vol^{2/3} (q = 6) and the
    proof identity (4/3) int |grad phi|^2 eta = a1 - (1/6) int S phi^2 eta,
    with a1 evaluated through its S~-form (deformed-curvature route) so the
    two sides are independent.
    """
    fac = _factor(phi)
    pv = _phi_samples(fac, mesh)
    vol = mesh.total_volume
    i2 = mesh.integrate_values(pv**2)
    i6 = mesh.integrate_values(pv**6)
    bound = i6 ** (1.0 / 3.0) * vol ** (2.0 / 3.0)
    grad2 = covariant_norm2_samples(fac.phi, spec, mesh, 1, policy=policy)
    igrad = mesh.integrate_values(grad2)
    Ssamp = scalar_field_samples(spec, mesh, policy=policy)
    if precomputed is not None and "stilde" in precomputed:
        st = precomputed["stilde"]
    else:
        st, _ = deformed_curvature_samples(spec, fac, mesh, policy=policy)
    a1 = mesh.integrate_values(st * pv**6) / 6.0
    is2 = mesh.integrate_values(Ssamp * pv**2)
    lhs = (4.0 / 3.0) * igrad
    rhs = a1 - is2 / 6.0
    scale = max(abs(lhs), abs(rhs), 1e-12)
    return Lemma51Record(
        int_phi2=float(i2), int_phi6=float(i6), holder_bound=float(bound),
        holder_slack=float(bound - i2), int_grad2=float(igrad), a1=float(a1),
        int_S_phi2=float(is2), identity_residual=float(abs(lhs - rhs) / scale),
    )


@dataclass
class Lemma52Record:
    S_const: float
    S_spread: float
    lhs_int_stilde2: float
    I1_int_S2_phim2: float
    I2_middle: float
    I3_int_lap2_phim4: float
    expansion_residual: float
    I2_parts_form: float
    parts_residual: float
    I2_weakform: float
    sign_ok: bool
    cap_lower_slack: float
    a2: float
    cap120_slack: float


def lemma52_identity(phi, spec, mesh: SphereBundleMesh, policy=DEFAULT_POLICY,
                     precomputed=None, op=None, s_const_tol=1e-6) -> Lemma52Record:
    """Expansion of int S~^2 eta~ for constant S, with the parts rewrite.

    Positive-convention corrected middle term: the expansion reads
    int S~^2 eta~ = int S^2 phi^-2 eta + 16 int S phi^-3 Lap(phi) eta
    + 64 int (Lap phi)^2 phi^-4 eta (source prints -16; with the corrected
    sign the printed parts form I2 = -48 S int |grad phi|^2 phi^-4 eta is the
    true rewrite, and S <= 0 gives I2 >= 0).  Also checks
    I1 + I3 <= int S~^2 eta~ <= 120 a2.
    """
    fac = _factor(phi)
    pv = _phi_samples(fac, mesh)
    Ssamp = scalar_field_samples(spec, mesh, policy=policy)
    spread = float(Ssamp.max() - Ssamp.min())
    if spread > s_const_tol:
        raise NonConstantScalarCurvature(
            f"S-hat varies by {spread:.3e} over the mesh (tol {s_const_tol:.1e})"
        )
    Sbar = float(Ssamp.mean())
    if precomputed is not None and "stilde" in precomputed:
        st, rn2 = precomputed["stilde"], precomputed["ricci2"]
    else:
        st, rn2 = deformed_curvature_samples(spec, fac, mesh, policy=policy)
    lhs = mesh.integrate_values(st**2 * pv**6)
    lap = _lap_on_mesh(fac.phi, spec, mesh, policy)
    I1 = mesh.integrate_values(Ssamp**2 / pv**2)
    I2 = 16.0 * mesh.integrate_values(Ssamp * lap / pv**3)
    I3 = 64.0 * mesh.integrate_values(lap**2 / pv**4)
    scale = max(abs(lhs), abs(I1 + I2 + I3), 1e-12)
    expansion_residual = abs(lhs - (I1 + I2 + I3)) / scale

    grad2 = covariant_norm2_samples(fac.phi, spec, mesh, 1, policy=policy)
    I2_parts = -48.0 * Sbar * mesh.integrate_values(grad2 / pv**4)
    pscale = max(abs(I2), abs(I2_parts), 1e-12)
    parts_residual = abs(I2 - I2_parts) / pscale

    # exact weak-form pairing <A phi, phi^-3>_blocks as the discrete diagnostic
    if op is None:
        op = assemble(spec, mesh, policy=policy)
    I2_weak = 16.0 * Sbar * op.energy(pv, pv**-3)

    hi = heat_invariants(spec, fac, mesh, policy=policy,
                         precomputed={"stilde": st, "ricci2": rn2})
    return Lemma52Record(
        S_const=Sbar, S_spread=spread, lhs_int_stilde2=float(lhs),
        I1_int_S2_phim2=float(I1), I2_middle=float(I2), I3_int_lap2_phim4=float(I3),
        expansion_residual=float(expansion_residual), I2_parts_form=float(I2_parts),
        parts_residual=float(parts_residual), I2_weakform=float(I2_weak),
        sign_ok=bool(Sbar > 0 or I2 >= -1e-9 * max(abs(I2), 1.0)),
        cap_lower_slack=float(lhs - (I1 + I3)), a2=float(hi.a2),
        cap120_slack=float(120.0 * hi.a2 - lhs),
    )


@dataclass
class Lemma53Record:
    representation_residual: float
    representation_mode: str
    chain_rule_residual: float
    mean_inv_phi: float
    cauchy_schwarz_cap: float
    cauchy_schwarz_slack: float
    c1_candidate: float
    bracket_S_term: float
    bracket_Stilde_term: float
    green_min: float | None


def lemma53_lower_bound(phi, spec, mesh: SphereBundleMesh, green: GreenMatrix | None = None,
                        op=None, policy=DEFAULT_POLICY, precomputed=None) -> Lemma53Record:
    """Green representation of 1/phi and the pointwise lower-bound data.

    The representation 1/phi = mean(1/phi) + G-apply(Lap(1/phi)) is verified
    as the exact discrete identity (dense pseudo-inverse when available,
    AMG-CG solve otherwise); the sign follows Aubin's reproduction identity
    with the positive Laplacian (the source lemma prints -Lap).  The
    reciprocal chain rule is checked through two jet routes in the corrected
    form Lap(1/phi) = -phi^-2 Lap(phi) - 2 |grad phi|^2/phi^3 (source prints
    + 2 |grad phi|^2 / phi^3).
    """
    fac = _factor(phi)
    pv = _phi_samples(fac, mesh)
    if op is None:
        op = assemble(spec, mesh, policy=policy)
    w = 1.0 / pv[:, 0]
    mvec = op.block_measure(0)
    vol = float(mvec.sum())
    mean_w = float((w * mvec).sum()) / vol
    lap_w = op.block(0) @ w / mvec
    if green is not None:
        applied = green.G @ (mvec * lap_w)
        mode = "dense"
        gmin = float(green.G.min())
    else:
        try:
            from .spectral import green_function

            green = green_function(op, policy=policy)
            applied = green.G @ (mvec * lap_w)
            mode = "dense"
            gmin = float(green.G.min())
        except Exception:
            applied = green_apply(op, lap_w, policy=policy)
            mode = "iterative"
            gmin = None
    rep_res = float(np.max(np.abs(w - mean_w - applied))) / max(float(np.max(np.abs(w))), 1e-12)

    inv_field = _power_field(fac, -1.0, f"1/{fac.label}")
    lhs = _lap_on_mesh(inv_field, spec, mesh, policy)
    lap_phi = _lap_on_mesh(fac.phi, spec, mesh, policy)
    grad2 = covariant_norm2_samples(fac.phi, spec, mesh, 1, policy=policy)
    rhs = -lap_phi / pv**2 - 2.0 * grad2 / pv**3
    cscale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))), 1e-12)
    chain_res = float(np.max(np.abs(lhs - rhs))) / cscale

    int_invphi2 = mesh.integrate_values(1.0 / pv**2)
    cap = (int_invphi2 / vol_total(mesh)) ** 0.5
    mean_inv = mesh.integrate_values(1.0 / pv) / vol_total(mesh)

    Ssamp = scalar_field_samples(spec, mesh, policy=policy)
    if precomputed is not None and "stilde" in precomputed:
        st = precomputed["stilde"]
    else:
        st, _ = deformed_curvature_samples(spec, fac, mesh, policy=policy)
    bracket_S = float(np.sqrt(mesh.integrate_values(Ssamp**2 / pv**2)))
    bracket_St = float(np.sqrt(mesh.integrate_values(st**2 * pv**6)))
    return Lemma53Record(
        representation_residual=rep_res, representation_mode=mode,
        chain_rule_residual=chain_res, mean_inv_phi=float(mean_inv),
        cauchy_schwarz_cap=float(cap), cauchy_schwarz_slack=float(cap - mean_inv),
        c1_candidate=float(pv.min()), bracket_S_term=bracket_S,
        bracket_Stilde_term=bracket_St, green_min=gmin,
    )


def vol_total(mesh: SphereBundleMesh):
    return mesh.total_volume


@dataclass
class Lemma54Record:
    epsilon: float
    lhs_phihat6_pow13: float
    int_grad_phihat2: float
    int_phihat2: float
    C1: float
    C2: float
    C1_needed: float
    sobolev_slack: float
    energy_lhs: float
    energy_rhs: float
    energy_residual: float
    int_phi_6_plus_eps: float


def lemma54_sobolev_chain(phi, spec, mesh: SphereBundleMesh, eps, C1=None, C2=None,
                          policy=DEFAULT_POLICY) -> Lemma54Record:
    """Sobolev inequality data for phi-hat = phi^{1+eps} plus the energy identity.

    C2 defaults to the constant-factor calibration floor vol^{-2/3} (equality
    for every constant factor); when C1 is not supplied the smallest C1
    making the inequality hold for this factor is reported and used.  The
    energy identity is evaluated with the corrected positive sign
    8 int phi^{1+2e} Lap(phi) = (8(1+2e)/(1+e)^2) int |grad phi-hat|^2
    (source prints a minus on the right).
    """
    eps = float(eps)
    if not (0.0 < eps < 2.0):
        raise EpsilonOutOfRange(f"epsilon {eps} outside (0, 2)")
    fac = _factor(phi)
    pv = _phi_samples(fac, mesh)
    vol = mesh.total_volume
    phihat = _power_field(fac, 1.0 + eps)
    ph = pv ** (1.0 + eps)
    lhs = mesh.integrate_values(ph**6) ** (1.0 / 3.0)
    grad_hat2 = covariant_norm2_samples(phihat, spec, mesh, 1, policy=policy)
    igrad = mesh.integrate_values(grad_hat2)
    i2 = mesh.integrate_values(ph**2)
    if C2 is None:
        C2 = vol ** (-2.0 / 3.0)
    if igrad > 1e-14 * max(lhs, 1.0):
        c1_needed = max(0.0, (lhs - C2 * i2) / igrad)
    else:
        c1_needed = 0.0
    if C1 is None:
        C1 = c1_needed
    slack = C1 * igrad + C2 * i2 - lhs

    lap_phi = _lap_on_mesh(fac.phi, spec, mesh, policy)
    elhs = 8.0 * mesh.integrate_values(pv ** (1.0 + 2.0 * eps) * lap_phi)
    erhs = 8.0 * (1.0 + 2.0 * eps) / (1.0 + eps) ** 2 * igrad
    escale = max(abs(elhs), abs(erhs), 1e-12)
    return Lemma54Record(
        epsilon=eps, lhs_phihat6_pow13=float(lhs), int_grad_phihat2=float(igrad),
        int_phihat2=float(i2), C1=float(C1), C2=float(C2), C1_needed=float(c1_needed),
        sobolev_slack=float(slack), energy_lhs=float(elhs), energy_rhs=float(erhs),
        energy_residual=float(abs(elhs - erhs) / escale),
        int_phi_6_plus_eps=float(mesh.integrate_values(pv ** (6.0 + eps))),
    )


# -- the theorem probe ------------------------------------------------------------


@dataclass
class ProbeConfig:
    alpha0: float
    alpha1: float
    alpha2: float
    lam: float
    resolution: tuple = (8, 8, 8)
    direction_rule: tuple = ("icosphere", 1)
    stilde_source: str = "direct"
    a0_rtol: float = 1e-6

    def __post_init__(self):
        for name in ("alpha0", "alpha1", "alpha2", "lam"):
            if getattr(self, name) <= 0:
                raise EpsilonOutOfRange(f"probe cap {name} must be positive")


@dataclass
class MemberRecord:
    label: str
    a0: float
    a1: float
    a2: float
    lambda1_deformed: float
    h1_volume: bool
    h2_a1: bool
    h3_a2: bool
    h4_lambda: bool
    passes: bool
    phi_min: float
    phi_max: float
    w22_norm: float
    a0_deviation: float
    error: str = ""


@dataclass
class BoundsReport:
    members: list
    errors: list
    n_pass: int
    envelope_phi_min: float | None
    envelope_phi_max: float | None
    envelope_w22: float | None
    note: str = (
        "envelopes are measured over passing members; the theorem's constants "
        "are existential and no certified constant is claimed"
    )


def theorem_check(family, spec, config: ProbeConfig, policy=DEFAULT_POLICY) -> BoundsReport:
    """Hypotheses (i)-(iv) and conclusion data (v)-(vi) for a factor family.

    Hypothesis (i) is an equality in the source; it is realized as relative
    agreement |a0 - alpha0| <= a0_rtol * alpha0 with the deviation reported.
    Member failures are collected, not fatal.  The family envelopes over
    passing members are the numerical content of the compactness statement.
    """
    family = list(family)
    if not family:
        raise EmptyFamily("probe invoked with an empty factor family")
    mesh = build_mesh(spec, config.resolution, config.direction_rule, policy)
    members, errors = [], []
    for k, phi in enumerate(family):
        fac = _factor(phi)
        label = fac.label or f"member-{k}"
        try:
            members.append(
                _check_member(fac, label, spec, mesh, config, policy)
            )
        except Exception as exc:  # collected per contract
            errors.append((label, f"{type(exc).__name__}: {exc}"))
            members.append(MemberRecord(
                label=label, a0=np.nan, a1=np.nan, a2=np.nan,
                lambda1_deformed=np.nan, h1_volume=False, h2_a1=False,
                h3_a2=False, h4_lambda=False, passes=False,
                phi_min=np.nan, phi_max=np.nan, w22_norm=np.nan,
                a0_deviation=np.nan, error=f"{type(exc).__name__}: {exc}",
            ))
    passing = [m for m in members if m.passes]
    return BoundsReport(
        members=members,
        errors=errors,
        n_pass=len(passing),
        envelope_phi_min=min((m.phi_min for m in passing), default=None),
        envelope_phi_max=max((m.phi_max for m in passing), default=None),
        envelope_w22=max((m.w22_norm for m in passing), default=None),
    )


def _check_member(fac, label, spec, mesh, config, policy) -> MemberRecord:
    hi = heat_invariants(spec, fac, mesh, stilde_source=config.stilde_source, policy=policy)
    deformed = conformal_deform(spec, fac, policy=policy)
    dmesh = build_mesh(deformed, config.resolution, config.direction_rule, policy)
    dop = assemble(deformed, dmesh, policy=policy)
    lam1 = lambda1(dop, policy=policy)
    a0_dev = abs(hi.a0 - config.alpha0) / config.alpha0
    h1 = a0_dev <= config.a0_rtol
    h2 = hi.a1 <= config.alpha1
    h3 = hi.a2 <= config.alpha2
    h4 = lam1 >= config.lam
    passes = h1 and h2 and h3 and h4
    pv = sample_scalar(fac.phi, mesh)
    mn, _, mx, _ = field_extrema(pv, mesh)
    w22 = sobolev_norm(fac.phi, mesh, spec, k=2, p=2, form="eq1000", policy=policy)
    return MemberRecord(
        label=label, a0=hi.a0, a1=hi.a1, a2=hi.a2, lambda1_deformed=lam1,
        h1_volume=h1, h2_a1=h2, h3_a2=h3, h4_lambda=h4, passes=passes,
        phi_min=mn, phi_max=mx, w22_norm=w22, a0_deviation=a0_dev,
    )


# -- bootstrap recurrence -----------------------------------------------------------


def bootstrap_exponents(eps, rmax_stop=12, max_steps=64):
    """Exponent bootstrap r_{k+1} = 6 r_k / (12 - r_k), p_k = 2 r_k / (4 + r_k).

    Starts at r_0 = 6 + eps, runs in exact rational arithmetic, stops once
    r_k >= rmax_stop (or after max_steps); strict increase is asserted via
    the identity r_{k+1} - r_k = r_k (r_k - 6)/(12 - r_k) > 0 for r_k < 12.
    """
    if isinstance(eps, Fraction):
        e = eps
    else:
        e = Fraction(str(eps))
    if e <= 0:
        raise InvalidEpsilon(f"epsilon must be positive, got {eps}")
    r = Fraction(6) + e
    if r >= 12:
        raise InvalidEpsilon(f"r0 = 6 + eps = {float(r)} must stay below 12")
    stop = Fraction(str(rmax_stop)) if not isinstance(rmax_stop, Fraction) else rmax_stop
    seq = []
    for _ in range(max_steps):
        p = 2 * r / (4 + r)
        seq.append((r, p))
        if r >= stop:
            break
        if r >= 12:
            break
        nxt = 6 * r / (12 - r)
        assert nxt > r, "bootstrap sequence failed to increase"
        r = nxt
    return seq
