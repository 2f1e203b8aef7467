"""Error taxonomy shared by every kyleback module.

All failures surface as one of these types so the CLI can map them onto
exit codes (2 = input/usage error, 1 = a verification check failed).
"""

from __future__ import annotations


class KylebackError(Exception):
    """Base class for every error raised by this package."""


class ParseError(KylebackError):
    """Scenario file is malformed: bad JSON, unknown key, wrong type."""


class ValidationError(KylebackError):
    """Scenario parsed but a field violates its constraint; message names the field."""


class DomainError(KylebackError):
    """A time function was evaluated outside [0, T]."""


class LengthMismatch(KylebackError):
    """Array arguments that must share a grid have different lengths."""


class BlowUpError(KylebackError):
    """The Riccati solution left (0, bound] or a simulated state exceeded the guard."""


class NotApplicable(KylebackError):
    """A closed-form route was requested for coefficients outside its regime."""


class DegenerateError(KylebackError):
    """The equilibrium is degenerate (no information to trade on)."""


class SingularCovariance(KylebackError):
    """Observation covariance not positive definite even after ridge retry."""


class WeightDegeneracyWarning(UserWarning):
    """Importance weights collapsed: effective sample size below threshold."""


class SingularCovarianceWarning(UserWarning):
    """Cholesky needed a ridge retry; results carry the regularization."""
