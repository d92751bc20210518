"""Exception hierarchy shared by every mfgap module."""


class MeanFieldError(Exception):
    """Base class for all mfgap errors"""


class UnknownModelError(MeanFieldError, KeyError):
    """Requested builtin model family does not exist"""

    def __str__(self) -> str:
        return Exception.__str__(self)


class InvalidModelParameters(MeanFieldError, ValueError):
    """Parameters are outside the valid range of a model family"""


class NonIntegrableError(MeanFieldError):
    """The c_Lip,m integrand did not decay before the truncation limit"""


class NonDissipativeError(MeanFieldError, ValueError):
    """c_V + c_W <= 0: the explicit c_Lip,m estimate does not apply"""


class UnsupportedModelError(MeanFieldError):
    """Operation has no analytic route for this model and no sampling budget was given"""


class ZegarlinskiFails(MeanFieldError):
    """gamma_0 >= 1: no log-Sobolev conclusion can be drawn"""

    def __init__(self, gamma0: float):
        super().__init__(f"Zegarlinski condition fails: gamma0 = {gamma0:.6g} >= 1")
        self.gamma0 = gamma0


class VacuousBound(MeanFieldError):
    """The requested bound has a non-positive denominator"""


class BlowupError(MeanFieldError):
    """Particle positions left the finite range during a step"""

    def __init__(self, step: int, max_abs: float):
        super().__init__(f"Blowup at step {step}: max |x| = {max_abs:.3g}")
        self.step = step
        self.max_abs = max_abs


class DegenerateAcceptance(MeanFieldError):
    """MALA acceptance rate fell below the usable threshold"""

    def __init__(self, acceptance_rate: float, dt: float):
        super().__init__(
            f"MALA acceptance {acceptance_rate:.4f} < 1% at dt={dt:g}; reduce the step size"
        )
        self.acceptance_rate = acceptance_rate
        self.dt = dt


class InsufficientSignal(MeanFieldError):
    """No lag window has an autocovariance clearly above its noise level"""


class MassLeak(MeanFieldError):
    """Grid boundary cells carry too much probability mass"""

    def __init__(self, boundary_mass: float, threshold: float):
        super().__init__(
            f"Boundary cells carry mass {boundary_mass:.3e} (> {threshold:.0e}); enlarge the grid"
        )
        self.boundary_mass = boundary_mass


class UnboundedEntropy(MeanFieldError):
    """The measure charges cells where the reference density underflows"""


class SupportTooRough(MeanFieldError):
    """The effective support of the measure is not a single interval"""


class SchemeError(MeanFieldError):
    """The finite-volume scheme broke one of its guarantees (positivity, mass conservation)"""


class NegativeDensity(SchemeError):
    """The positivity-preserving scheme produced a negative density"""


class NoConvergence(MeanFieldError):
    """Fixed-point iteration did not reach the tolerance"""

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = history


class QuadratureError(MeanFieldError):
    """A quadrature-based identity check did not meet its tolerance"""


class ConfigError(MeanFieldError):
    """Experiment configuration could not be parsed or validated"""

    def __init__(self, message: str, diagnostics: list[str] | None = None):
        self.diagnostics = diagnostics or []
        full = message if not self.diagnostics else message + "\n  " + "\n  ".join(self.diagnostics)
        super().__init__(full)
