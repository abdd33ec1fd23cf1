"""Exception types shared across the package."""


class QaxbError(Exception):
    """Base class for all package errors."""


class QuadratureError(QaxbError):
    """Adaptive quadrature failed to converge within its budget."""


class PoleSplitError(QuadratureError):
    """The principal-value window around the integrand pole failed to converge.

    Distinct from generic non-convergence so callers can tell a bad pole
    split from an undersized subdivision budget.
    """


class ValidationError(QaxbError):
    """An operator precondition failed; carries the measured defect."""

    def __init__(self, message, defect=None):
        if defect is not None:
            message = f"{message} (measured defect {defect:.3e})"
        super().__init__(message)
        self.defect = defect


class JointCalcError(QaxbError):
    """Joint spectral classification failed (rho not near -1, 0, +1)."""


class ExtractionError(QaxbError):
    """Representation-parameter extraction rejected its input."""


class ConfigError(QaxbError):
    """Scenario configuration could not be parsed or validated."""
