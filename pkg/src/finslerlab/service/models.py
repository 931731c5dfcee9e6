"""Pydantic request/response models for the service API.

The config model mirrors the text-config sections; expression-valued fields
travel as strings and are compiled server-side by the same grammar the CLI
uses, so a client can submit either a parsed config or raw config text.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class MetricModel(BaseModel):
    kind: str = "flat"
    periods: tuple[float, float, float] = (1.0, 1.0, 1.0)
    exprs: dict[str, str] = Field(default_factory=dict)


class MeshModel(BaseModel):
    resolution: tuple[int, int, int] = (16, 16, 16)
    directions: str = "icosphere 1"


class FactorModel(BaseModel):
    phis: list[str] = Field(default_factory=list)
    family_count: int = 0
    family_seed: int = 7
    family_amplitude: float = 0.1


class ProbeModel(BaseModel):
    alpha0: float | str = "auto"
    alpha1: float | str = "auto"
    alpha2: float | str = "auto"
    lam: float | str = "auto"
    margin: float = 0.10
    a0_rtol: float = 1e-6
    stilde_source: str = "direct"


class ConfigModel(BaseModel):
    metric: MetricModel = MetricModel()
    mesh: MeshModel = MeshModel()
    factor: FactorModel = FactorModel()
    probe: ProbeModel = ProbeModel()
    spectral_m: int = 10
    spectral_tol: float = 1e-8
    config_hash: str = ""


class GeomRequest(BaseModel):
    config: ConfigModel
    x: tuple[float, float, float]
    y: tuple[float, float, float]
    check: bool = False


class GeomResponse(BaseModel):
    F: float
    g: list[list[float]]
    cartan_norm: float
    sprayG: list[float]
    N: list[list[float]]
    gamma_norm: float
    scalar_curvature: float
    chern_route_deviation: float
    check_passed: bool | None = None
    check_max_deviation: float | None = None


class InvariantRow(BaseModel):
    factor: str
    a0: float
    a1: float
    a2: float
    err0: float
    err1: float
    err2: float
    a1_stilde_form: float


class InvariantsRequest(BaseModel):
    config: ConfigModel


class InvariantsResponse(BaseModel):
    rows: list[InvariantRow]


class SpectrumRequest(BaseModel):
    config: ConfigModel
    m: int = 10


class SpectrumResponse(BaseModel):
    eigenvalues: list[float]
    residuals: list[float]
    method: str
    block_multiplicity: int


class IsospecRequest(BaseModel):
    config: ConfigModel
    m: int = 10
    tol: float = 1e-8


class IsospecRow(BaseModel):
    factor: str
    max_rel_gap: float
    verdict: bool


class IsospecResponse(BaseModel):
    rows: list[IsospecRow]
    base_eigenvalues: list[float]


class ProbeRequest(BaseModel):
    config: ConfigModel


class ProbeMemberRow(BaseModel):
    label: str
    a0: float | None
    a1: float | None
    a2: float | None
    lambda1_deformed: float | None
    h1_volume: bool
    h2_a1: bool
    h3_a2: bool
    h4_lambda: bool
    passes: bool
    phi_min: float | None
    phi_max: float | None
    w22_norm: float | None
    a0_deviation: float | None
    error: str = ""


class IdentitySummary(BaseModel):
    factor: str
    lemma51_identity: float
    lemma52_expansion: float
    lemma52_parts: float
    lemma53_representation: float
    lemma53_chain_rule: float
    lemma54_energy: float
    max_residual: float
    slacks_nonnegative: bool


class ProbeResponse(BaseModel):
    members: list[ProbeMemberRow]
    envelope_phi_min: float | None
    envelope_phi_max: float | None
    envelope_w22: float | None
    n_pass: int
    alpha0: float
    alpha1: float
    alpha2: float
    lam: float
    identities: list[IdentitySummary]
    identity_health: bool
    errors: list[str]


class BootstrapRequest(BaseModel):
    epsilon: float
    rmax_stop: float = 12.0


class BootstrapResponse(BaseModel):
    r: list[float]
    p: list[float]
    r_exact: list[str]
    p_exact: list[str]


class ErrorPayload(BaseModel):
    error_type: str
    message: str
