r"""Run configuration: the documented plain-text config format.

Sections and keys (INI-style, parsed with the stdlib parser; expression
values go through the hand-written grammar in :mod:`finslerlab.expr`):

    [metric]
    kind = flat | riemannian | randers | closed_form
    periods = 1, 1, 1
    a11 = 1 + 0.1*sin(2*pi*x1)   ; riemannian/randers coefficients, default
    ...  a12, a13, a22, a23, a33 ; to the identity entries
    b1 = 0.2                     ; randers one-form components, default 0
    f = ...                      ; closed_form: F(x1..x3, y1..y3)

    [mesh]
    resolution = 16, 16, 16
    directions = icosphere 1 | product 6 12 | single 1,0,0

    [factor]
    phi = 1 + 0.1*sin(2*pi*x1)   ; one factor, or a generated family:
    family_count = 10
    family_seed = 7
    family_amplitude = 0.15

    [probe]
    alpha0 = auto | <value>      ; auto self-calibrates from measured values
    alpha1 = auto | <value>
    alpha2 = auto | <value>
    lambda = auto | <value>
    margin = 0.10                ; auto margin: caps*(1+margin), floor*(1-margin)
    a0_rtol = 1e-6
    stilde_source = direct | predicted

    [spectral]
    m = 10
    tol = 1e-8

    [output]
    directory = out

Every numeric field is validated against the preconditions of the target
operations; failures raise ConfigError naming section and field.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field as dfield

import numpy as np

from . import jets, metrics
from .errors import ConfigError
from .expr import compile_expression
from .fields import ScalarField
from .conformal import ConformalFactor

_IDENTITY = {"a11": "1", "a22": "1", "a33": "1", "a12": "0", "a13": "0", "a23": "0"}


@dataclass
class RunConfig:
    metric_kind: str = "flat"
    periods: tuple = (1.0, 1.0, 1.0)
    metric_exprs: dict = dfield(default_factory=dict)
    resolution: tuple = (16, 16, 16)
    direction_rule: tuple = ("icosphere", 1)
    factor_exprs: list = dfield(default_factory=list)
    family_count: int = 0
    family_seed: int = 7
    family_amplitude: float = 0.1
    alpha0: object = "auto"
    alpha1: object = "auto"
    alpha2: object = "auto"
    lam: object = "auto"
    margin: float = 0.10
    a0_rtol: float = 1e-6
    stilde_source: str = "direct"
    spectrum_m: int = 10
    spectrum_tol: float = 1e-8
    output_dir: str = "out"
    raw_text: str = ""

    def config_hash(self) -> str:
        return hashlib.sha256(self.raw_text.encode()).hexdigest()[:16]


def _floats(text, n, where):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != n:
        raise ConfigError(f"{where}: expected {n} comma-separated values, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config_text(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_file(io.StringIO(text))
    except configparser.Error as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc
    cfg = RunConfig(raw_text=text)

    if cp.has_section("metric"):
        sec = cp["metric"]
        cfg.metric_kind = sec.get("kind", "flat").strip()
        if "periods" in sec:
            cfg.periods = _floats(sec["periods"], 3, "[metric] periods")
        for key in list(_IDENTITY) + ["b1", "b2", "b3", "f", "w"]:
            if key in sec:
                cfg.metric_exprs[key] = sec[key].strip()
    if cfg.metric_kind not in ("flat", "riemannian", "randers", "closed_form"):
        raise ConfigError(f"[metric] kind: unknown kind {cfg.metric_kind!r}")
    if cfg.metric_kind == "closed_form" and "f" not in cfg.metric_exprs:
        raise ConfigError("[metric] f: closed_form metric needs an f expression")

    if cp.has_section("mesh"):
        sec = cp["mesh"]
        if "resolution" in sec:
            vals = _floats(sec["resolution"], 3, "[mesh] resolution")
            cfg.resolution = tuple(int(v) for v in vals)
            if any(v < 4 for v in cfg.resolution):
                raise ConfigError("[mesh] resolution: minimum 4 nodes per axis")
        if "directions" in sec:
            cfg.direction_rule = _parse_direction_rule(sec["directions"])

    if cp.has_section("factor"):
        sec = cp["factor"]
        for key in sorted(sec):
            if key == "phi" or key.startswith("phi"):
                cfg.factor_exprs.append(sec[key].strip())
        if "family_count" in sec:
            cfg.family_count = sec.getint("family_count")
            if cfg.family_count < 0:
                raise ConfigError("[factor] family_count must be >= 0")
        if "family_seed" in sec:
            cfg.family_seed = sec.getint("family_seed")
        if "family_amplitude" in sec:
            cfg.family_amplitude = sec.getfloat("family_amplitude")
            if not (0 < cfg.family_amplitude < 1):
                raise ConfigError("[factor] family_amplitude must lie in (0, 1)")

    if cp.has_section("probe"):
        sec = cp["probe"]
        for name, attr in (("alpha0", "alpha0"), ("alpha1", "alpha1"),
                           ("alpha2", "alpha2"), ("lambda", "lam")):
            if name in sec:
                raw = sec[name].strip()
                if raw != "auto":
                    try:
                        val = float(raw)
                    except ValueError as exc:
                        raise ConfigError(f"[probe] {name}: {exc}") from exc
                    if val <= 0:
                        raise ConfigError(f"[probe] {name} must be positive")
                    setattr(cfg, attr, val)
        if "margin" in sec:
            cfg.margin = sec.getfloat("margin")
        if "a0_rtol" in sec:
            cfg.a0_rtol = sec.getfloat("a0_rtol")
        if "stilde_source" in sec:
            cfg.stilde_source = sec["stilde_source"].strip()
            if cfg.stilde_source not in ("direct", "predicted"):
                raise ConfigError("[probe] stilde_source must be direct or predicted")

    if cp.has_section("spectral"):
        sec = cp["spectral"]
        if "m" in sec:
            cfg.spectrum_m = sec.getint("m")
            if cfg.spectrum_m < 1:
                raise ConfigError("[spectral] m must be >= 1")
        if "tol" in sec:
            cfg.spectrum_tol = sec.getfloat("tol")

    if cp.has_section("output"):
        sec = cp["output"]
        if "directory" in sec:
            cfg.output_dir = sec["directory"].strip()
    return cfg


def parse_config_file(path) -> RunConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


def _parse_direction_rule(text):
    parts = text.replace(",", " ").split()
    if not parts:
        raise ConfigError("[mesh] directions: empty rule")
    kind = parts[0]
    if kind == "icosphere":
        k = int(parts[1]) if len(parts) > 1 else 1
        if k < 0 or k > 4:
            raise ConfigError("[mesh] directions: icosphere level must be 0..4")
        return ("icosphere", k)
    if kind == "product":
        if len(parts) != 3:
            raise ConfigError("[mesh] directions: product needs theta and phi counts")
        return ("product", int(parts[1]), int(parts[2]))
    if kind == "single":
        if len(parts) == 4:
            return ("single", (float(parts[1]), float(parts[2]), float(parts[3])))
        return ("single", (1.0, 0.0, 0.0))
    raise ConfigError(f"[mesh] directions: unknown rule {kind!r}")


# -- object construction ---------------------------------------------------------


def build_metric(cfg: RunConfig) -> metrics.MetricSpec:
    chart = metrics.PeriodicChart3(cfg.periods)
    kind = cfg.metric_kind
    if kind == "flat":
        return metrics.euclidean(chart)
    if kind in ("riemannian", "randers"):
        entries = {}
        for key in _IDENTITY:
            text = cfg.metric_exprs.get(key, _IDENTITY[key])
            fn, dirdep = compile_expression(text)
            if dirdep:
                raise ConfigError(f"[metric] {key}: coefficients may not use y-names")
            entries[key] = fn

        def a_fn(xs):
            e = {k: f(xs) for k, f in entries.items()}
            return [
                [e["a11"], e["a12"], e["a13"]],
                [e["a12"], e["a22"], e["a23"]],
                [e["a13"], e["a23"], e["a33"]],
            ]

        if kind == "riemannian":
            return metrics.riemannian_field(a_fn, chart, label=_metric_label(cfg))
        bs = []
        for key in ("b1", "b2", "b3"):
            text = cfg.metric_exprs.get(key, "0")
            fn, dirdep = compile_expression(text)
            if dirdep:
                raise ConfigError(f"[metric] {key}: coefficients may not use y-names")
            bs.append(fn)

        def b_fn(xs):
            return [bs[0](xs), bs[1](xs), bs[2](xs)]

        return metrics.randers(a_fn, b_fn, chart, label=_metric_label(cfg))
    fn, _ = compile_expression(cfg.metric_exprs["f"])

    def f_fn(xs, ys):
        return fn(xs, ys)

    return metrics.closed_form(f_fn, chart, label=_metric_label(cfg))


def _metric_label(cfg: RunConfig) -> str:
    items = ",".join(f"{k}={v}" for k, v in sorted(cfg.metric_exprs.items()))
    return f"{cfg.metric_kind}[{items}]"


def build_factors(cfg: RunConfig) -> list:
    """Explicit phi expressions plus the seeded bounded-amplitude family."""
    factors = []
    for i, text in enumerate(cfg.factor_exprs):
        fn, dirdep = compile_expression(text)
        factors.append(ConformalFactor(ScalarField(
            lambda xs, ys, fn=fn, dirdep=dirdep: fn(xs, ys if dirdep else None),
            not dirdep, label=f"phi[{text}]",
        )))
    if cfg.family_count:
        factors.extend(generate_family(cfg.family_count, cfg.family_seed,
                                       cfg.family_amplitude, cfg.periods))
    return factors


def generate_family(count, seed, amplitude, periods=(1.0, 1.0, 1.0)):
    """Deterministic family 1 + sum of first-mode waves, range within
    [1 - amplitude, 1 + amplitude]."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        coef = rng.uniform(-1.0, 1.0, size=6)
        total = np.sum(np.abs(coef))
        if total > 0:
            coef = coef * (amplitude / total)
        freq = [2.0 * np.pi / p for p in periods]

        def phi_fn(xs, ys, c=coef.copy(), f=tuple(freq)):
            out = 1.0 + 0.0 * xs[0]
            for ax in range(3):
                out = out + c[2 * ax] * jets.sin(f[ax] * xs[ax])
                out = out + c[2 * ax + 1] * jets.cos(f[ax] * xs[ax])
            return out

        out.append(ConformalFactor(ScalarField(phi_fn, True, label=f"family-{seed}-{k}")))
    return out
