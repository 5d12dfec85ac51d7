"""Exception and warning types shared across the package."""


class IUCertError(Exception):
    """Base class for all package errors."""


class DomainError(IUCertError, ValueError):
    """A function was evaluated outside its domain of definition."""


class ConvergenceError(IUCertError, RuntimeError):
    """An iterative method failed to converge within its budget."""


class QuadratureError(IUCertError, RuntimeError):
    """Adaptive quadrature missed its tolerance, or a cross-check disagreed."""


class NotSatisfiable(IUCertError):
    """No radius satisfies the requested growth conditions.

    The partially filled report (if any) is kept on ``self.report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InvalidPotential(IUCertError, ValueError):
    pass


class SignError(IUCertError, RuntimeError):
    """A vector expected to be positive changed sign."""


class ComparisonFailure(IUCertError):
    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = violations or []


class SandwichViolation(IUCertError):
    pass


class ContractionViolation(IUCertError):
    pass


class CertificateViolation(IUCertError):
    pass


class ConfigError(IUCertError, ValueError):
    pass


class TruncationWarning(UserWarning):
    """Spectral truncation left more mass than the declared tolerance."""


class DiscretizationWarning(UserWarning):
    """Grid too coarse for the second-order error model."""
