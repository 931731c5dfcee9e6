"""FastAPI service wrapping the library.

Long-lived deployments benefit from the config-hash caches: meshes, operators
and spectra survive across requests, so interactive exploration (point
queries, family probes, repeated spectra) does not rebuild them.  Errors map
to a typed payload {error_type, message}; clients translate those into exit
codes.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..bounds import (
    ProbeConfig,
    bootstrap_exponents,
    lemma51_bounds,
    lemma52_identity,
    lemma53_lower_bound,
    lemma54_sobolev_chain,
    theorem_check,
)
from ..conformal import conformal_deform, deformed_curvature_samples, heat_invariants
from ..errors import ConfigError, ConvergenceFailure, FinslerError
from ..geometry import geometry_at_point, geometry_batch, scalar_curvature, eval_metric
from ..mesh import build_mesh
from ..runconfig import RunConfig, build_factors, build_metric, _parse_direction_rule
from ..spectral import assemble, isospectral_compare, spectrum
from . import models as M

_IDENTITY_TOL = 1e-7


def _runconfig_from_model(cm: M.ConfigModel) -> RunConfig:
    cfg = RunConfig()
    cfg.metric_kind = cm.metric.kind
    cfg.periods = tuple(cm.metric.periods)
    cfg.metric_exprs = dict(cm.metric.exprs)
    cfg.resolution = tuple(cm.mesh.resolution)
    cfg.direction_rule = _parse_direction_rule(cm.mesh.directions)
    cfg.factor_exprs = list(cm.factor.phis)
    cfg.family_count = cm.factor.family_count
    cfg.family_seed = cm.factor.family_seed
    cfg.family_amplitude = cm.factor.family_amplitude
    for name in ("alpha0", "alpha1", "alpha2"):
        setattr(cfg, name, getattr(cm.probe, name))
    cfg.lam = cm.probe.lam
    cfg.margin = cm.probe.margin
    cfg.a0_rtol = cm.probe.a0_rtol
    cfg.stilde_source = cm.probe.stilde_source
    cfg.spectrum_m = cm.spectral_m
    cfg.spectrum_tol = cm.spectral_tol
    cfg.raw_text = cm.config_hash or repr(cm.model_dump())
    if cfg.metric_kind not in ("flat", "riemannian", "randers", "closed_form"):
        raise ConfigError(f"unknown metric kind {cfg.metric_kind!r}")
    if cfg.metric_kind == "closed_form" and "f" not in cfg.metric_exprs:
        raise ConfigError("closed_form metric needs an f expression")
    if any(n < 4 for n in cfg.resolution):
        raise ConfigError("mesh resolution: minimum 4 nodes per axis")
    return cfg


def _error_response(exc: Exception):
    if isinstance(exc, ConfigError):
        status = 400
    elif isinstance(exc, ConvergenceFailure):
        status = 503
    elif isinstance(exc, FinslerError):
        status = 422
    else:
        raise exc
    return JSONResponse(
        status_code=status,
        content=M.ErrorPayload(error_type=type(exc).__name__, message=str(exc)).model_dump(),
    )


class _Caches:
    def __init__(self, cap=16):
        self.mesh = {}
        self.operator = {}
        self.spectrum = {}
        self.cap = cap

    def _put(self, store, key, value):
        store[key] = value
        if len(store) > self.cap:
            store.pop(next(iter(store)))
        return value

    def get_mesh(self, spec, cfg):
        key = (spec.fingerprint(), cfg.resolution, cfg.direction_rule)
        if key not in self.mesh:
            self._put(self.mesh, key, build_mesh(spec, cfg.resolution, cfg.direction_rule))
        return self.mesh[key]

    def get_operator(self, spec, mesh):
        key = (spec.fingerprint(), mesh.fingerprint())
        if key not in self.operator:
            self._put(self.operator, key, assemble(spec, mesh))
        return self.operator[key]

    def get_spectrum(self, spec, mesh, op, m):
        key = (spec.fingerprint(), mesh.fingerprint(), m)
        if key not in self.spectrum:
            self._put(self.spectrum, key, spectrum(op, m))
        return self.spectrum[key]


def create_app() -> FastAPI:
    app = FastAPI(title="finslerlab service", version=__version__)
    caches = _Caches()

    @app.exception_handler(FinslerError)
    async def _finsler_error(request, exc):
        return _error_response(exc)

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/geometry/point", response_model=M.GeomResponse)
    def geometry_point(req: M.GeomRequest):
        cfg = _runconfig_from_model(req.config)
        spec = build_metric(cfg)
        pack = geometry_at_point(spec, np.asarray(req.x), np.asarray(req.y))
        geo = geometry_batch(spec, np.asarray(req.x), np.asarray(req.y), level="full")
        resp = M.GeomResponse(
            F=pack.F,
            g=pack.g.tolist(),
            cartan_norm=float(np.sqrt(np.sum(pack.cartan**2))),
            sprayG=pack.sprayG.tolist(),
            N=pack.N.tolist(),
            gamma_norm=float(np.sqrt(np.sum(pack.gamma**2))),
            scalar_curvature=pack.scalarS,
            chern_route_deviation=float(geo.extras.get("chern_route_dev", 0.0)),
        )
        if req.check:
            dev = _point_check(spec, np.asarray(req.x), np.asarray(req.y))
            resp.check_passed = dev <= 1e-9
            resp.check_max_deviation = dev
        return resp

    @app.post("/invariants", response_model=M.InvariantsResponse)
    def invariants(req: M.InvariantsRequest):
        cfg = _runconfig_from_model(req.config)
        spec = build_metric(cfg)
        mesh = caches.get_mesh(spec, cfg)
        factors = build_factors(cfg)
        if not factors:
            raise ConfigError("no conformal factors configured")
        rows = []
        for fac in factors:
            hi = heat_invariants(spec, fac, mesh, stilde_source=cfg.stilde_source)
            rows.append(M.InvariantRow(
                factor=fac.label, a0=hi.a0, a1=hi.a1, a2=hi.a2,
                err0=hi.err0, err1=hi.err1, err2=hi.err2,
                a1_stilde_form=hi.a1_stilde_form,
            ))
        return M.InvariantsResponse(rows=rows)

    @app.post("/spectrum", response_model=M.SpectrumResponse)
    def spectrum_endpoint(req: M.SpectrumRequest):
        cfg = _runconfig_from_model(req.config)
        spec = build_metric(cfg)
        mesh = caches.get_mesh(spec, cfg)
        op = caches.get_operator(spec, mesh)
        sp = caches.get_spectrum(spec, mesh, op, req.m)
        return M.SpectrumResponse(
            eigenvalues=[float(v) for v in sp.eigenvalues[: req.m]],
            residuals=[float(v) for v in sp.residuals[: req.m]],
            method=sp.method,
            block_multiplicity=sp.block_multiplicity,
        )

    @app.post("/isospectral", response_model=M.IsospecResponse)
    def isospectral(req: M.IsospecRequest):
        cfg = _runconfig_from_model(req.config)
        spec = build_metric(cfg)
        factors = build_factors(cfg)
        if not factors:
            raise ConfigError("no conformal factors configured")
        rows = []
        base = None
        for fac in factors:
            deformed = conformal_deform(spec, fac)
            rep = isospectral_compare(spec, deformed, cfg.resolution, cfg.direction_rule,
                                      req.m, req.tol)
            if base is None:
                base = [float(v) for v in rep.eigenvalues_a]
            rows.append(M.IsospecRow(factor=fac.label, max_rel_gap=rep.max_rel_gap,
                                     verdict=rep.verdict))
        return M.IsospecResponse(rows=rows, base_eigenvalues=base or [])

    @app.post("/probe", response_model=M.ProbeResponse)
    def probe(req: M.ProbeRequest):
        cfg = _runconfig_from_model(req.config)
        spec = build_metric(cfg)
        factors = build_factors(cfg)
        if not factors:
            raise ConfigError("no conformal factors configured")
        alphas = _resolve_caps(cfg, spec, factors)
        pconf = ProbeConfig(
            alpha0=alphas[0], alpha1=alphas[1], alpha2=alphas[2], lam=alphas[3],
            resolution=cfg.resolution, direction_rule=cfg.direction_rule,
            stilde_source=cfg.stilde_source, a0_rtol=cfg.a0_rtol,
        )
        report = theorem_check(factors, spec, pconf)
        identities = _identity_suite(spec, cfg, factors)
        members = [
            M.ProbeMemberRow(
                label=m.label,
                a0=_nan_none(m.a0), a1=_nan_none(m.a1), a2=_nan_none(m.a2),
                lambda1_deformed=_nan_none(m.lambda1_deformed),
                h1_volume=m.h1_volume, h2_a1=m.h2_a1, h3_a2=m.h3_a2,
                h4_lambda=m.h4_lambda, passes=m.passes,
                phi_min=_nan_none(m.phi_min), phi_max=_nan_none(m.phi_max),
                w22_norm=_nan_none(m.w22_norm), a0_deviation=_nan_none(m.a0_deviation),
                error=m.error,
            )
            for m in report.members
        ]
        health = all(s.max_residual <= _IDENTITY_TOL and s.slacks_nonnegative for s in identities)
        return M.ProbeResponse(
            members=members,
            envelope_phi_min=report.envelope_phi_min,
            envelope_phi_max=report.envelope_phi_max,
            envelope_w22=report.envelope_w22,
            n_pass=report.n_pass,
            alpha0=alphas[0], alpha1=alphas[1], alpha2=alphas[2], lam=alphas[3],
            identities=identities,
            identity_health=health,
            errors=[f"{label}: {msg}" for label, msg in report.errors],
        )

    @app.post("/bootstrap", response_model=M.BootstrapResponse)
    def bootstrap(req: M.BootstrapRequest):
        seq = bootstrap_exponents(req.epsilon, req.rmax_stop)
        return M.BootstrapResponse(
            r=[float(r) for r, _ in seq],
            p=[float(p) for _, p in seq],
            r_exact=[str(r) for r, _ in seq],
            p_exact=[str(p) for _, p in seq],
        )

    return app


def _nan_none(v):
    return None if v is None or (isinstance(v, float) and np.isnan(v)) else float(v)


def _point_check(spec, x, y, n_samples=100, seed=11):
    """Homogeneity/Euler suite at one point: max relative deviation."""
    rng = np.random.default_rng(seed)
    dev = 0.0
    for _ in range(n_samples):
        c = rng.uniform(0.1, 10.0)
        geo1 = geometry_batch(spec, x, y, level="full", checks=False)
        geo2 = geometry_batch(spec, x, c * y, level="full", checks=False)
        f1, f2 = float(geo1.F), float(geo2.F)
        dev = max(dev, abs(f2 - c * f1) / max(abs(c * f1), 1e-30))
        dev = max(dev, float(np.max(np.abs(geo2.g - geo1.g))) / max(float(np.max(np.abs(geo1.g))), 1e-30))
        dev = max(dev, abs(np.einsum("ij,i,j->", geo1.g, y, y) - f1**2) / max(f1**2, 1e-30))
        dev = max(dev, float(np.max(np.abs(geo2.sprayG - c**2 * geo1.sprayG))) / max(float(np.max(np.abs(c**2 * geo1.sprayG))), 1.0))
        dev = max(dev, float(np.max(np.abs(geo2.N - c * geo1.N))) / max(float(np.max(np.abs(c * geo1.N))), 1.0))
        dev = max(dev, float(np.max(np.abs(geo2.gamma - geo1.gamma))) / max(float(np.max(np.abs(geo1.gamma))), 1.0))
        y = rng.standard_normal(3)
    return dev


def _resolve_caps(cfg, spec, factors):
    """Self-calibrate 'auto' caps from measured values with the config margin."""
    needs = [cfg.alpha0 == "auto", cfg.alpha1 == "auto", cfg.alpha2 == "auto",
             cfg.lam == "auto"]
    if not any(needs):
        return float(cfg.alpha0), float(cfg.alpha1), float(cfg.alpha2), float(cfg.lam)
    mesh = build_mesh(spec, cfg.resolution, cfg.direction_rule)
    a0s, a1s, a2s, lams = [], [], [], []
    from ..spectral import lambda1 as _lambda1

    for fac in factors:
        hi = heat_invariants(spec, fac, mesh, stilde_source=cfg.stilde_source)
        a0s.append(hi.a0)
        a1s.append(hi.a1)
        a2s.append(hi.a2)
        deformed = conformal_deform(spec, fac)
        dmesh = build_mesh(deformed, cfg.resolution, cfg.direction_rule)
        lams.append(_lambda1(assemble(deformed, dmesh)))
    mg = cfg.margin
    alpha0 = float(cfg.alpha0) if cfg.alpha0 != "auto" else float(np.mean(a0s))
    alpha1 = float(cfg.alpha1) if cfg.alpha1 != "auto" else float(max(a1s) * (1 + mg) + 1e-12)
    alpha2 = float(cfg.alpha2) if cfg.alpha2 != "auto" else float(max(a2s) * (1 + mg) + 1e-12)
    lam = float(cfg.lam) if cfg.lam != "auto" else float(min(lams) * (1 - mg))
    return alpha0, alpha1, alpha2, lam


def _identity_suite(spec, cfg, factors):
    """Lemma 5.1-5.4 residual summary per factor (shared curvature sweep)."""
    mesh = build_mesh(spec, cfg.resolution, cfg.direction_rule)
    op = assemble(spec, mesh)
    out = []
    for fac in factors:
        st, rn2 = deformed_curvature_samples(spec, fac, mesh)
        pre = {"stilde": st, "ricci2": rn2}
        r51 = lemma51_bounds(fac, spec, mesh, precomputed=pre)
        r52 = lemma52_identity(fac, spec, mesh, precomputed=pre, op=op)
        r53 = lemma53_lower_bound(fac, spec, mesh, op=op, precomputed=pre)
        r54 = lemma54_sobolev_chain(fac, spec, mesh, 0.5)
        worst = max(r51.identity_residual, r52.expansion_residual, r52.parts_residual,
                    r53.representation_residual, r53.chain_rule_residual,
                    r54.energy_residual)
        slacks_ok = (r51.holder_slack >= -1e-12 and r52.cap_lower_slack >= -1e-9
                     and r52.cap120_slack >= -1e-9 and r53.cauchy_schwarz_slack >= -1e-12
                     and r54.sobolev_slack >= -1e-9 and r52.sign_ok)
        out.append(M.IdentitySummary(
            factor=fac.label,
            lemma51_identity=r51.identity_residual,
            lemma52_expansion=r52.expansion_residual,
            lemma52_parts=r52.parts_residual,
            lemma53_representation=r53.representation_residual,
            lemma53_chain_rule=r53.chain_rule_residual,
            lemma54_energy=r54.energy_residual,
            max_residual=worst,
            slacks_nonnegative=slacks_ok,
        ))
    return out


app = create_app()
