"""Exception types raised by the library.

Grouped by the failure they signal; the CLI maps them onto exit codes
(config -> 2, numeric/identity -> 3, convergence -> 4).
"""


class FinslerError(Exception):
    """Base class for all library errors."""


# -- input / precondition violations ----------------------------------------


class ZeroDirection(FinslerError):
    """Direction vector below the configured norm floor."""


class NonConvex(FinslerError):
    """Randers data violates ||b||_a < 1 at some point."""


class DegenerateMetric(FinslerError):
    """Fundamental tensor not positive-definite within the floor."""


class DerivativeUnavailable(FinslerError):
    """Metric spec cannot supply the requested derivative order."""


class UnsupportedOrder(FinslerError):
    """Covariant-derivative / Sobolev order outside the supported range."""


class UnsupportedLift(FinslerError):
    """Hessian second argument is neither a pure horizontal nor vertical lift."""


class DirectionJetsUnavailable(FinslerError):
    """Sampled field lacks direction derivatives needed by the operator."""


class NonPositiveFactor(FinslerError):
    """Conformal factor not strictly positive."""


class ModeMismatch(FinslerError):
    """Conflicting dimension-convention flags in the Yamabe residual."""


class EpsilonOutOfRange(FinslerError):
    """Bootstrap / Sobolev-chain epsilon outside its admissible interval."""


class InvalidEpsilon(EpsilonOutOfRange):
    """Bootstrap start r0 = 6 + eps not in (6, 12)."""


class RequestRejected(FinslerError):
    """Mesh resolution or direction rule outside the supported range."""


class EmptyFamily(FinslerError):
    """Probe invoked with no conformal factors."""


class ConstantField(FinslerError):
    """Rayleigh quotient requested for a (numerically) constant field."""


class NonConstantScalarCurvature(FinslerError):
    """Lemma 5.2-style identity requires constant horizontal scalar curvature."""


# -- cross-check / consistency failures --------------------------------------


class FormulaMismatch(FinslerError):
    """Two independent evaluation routes disagreed beyond tolerance."""


class MeshMismatch(FinslerError):
    """Sampled field does not belong to the mesh it is used with."""


class MeshTooCoarse(FinslerError):
    """Quadrature-error estimate exceeds the requested tolerance."""


class StencilOverflow(FinslerError):
    """Direction-coupling stencil unavailable on the chosen direction set."""


class RankDeficiency(FinslerError):
    """Discrete operator singular beyond the constant kernel."""


class GreenUnavailable(FinslerError):
    """No Green matrix / solver available for the mesh."""


class ConvergenceFailure(FinslerError):
    """Iterative eigensolver or linear solver failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(FinslerError):
    """Configuration file failed to parse or validate."""
