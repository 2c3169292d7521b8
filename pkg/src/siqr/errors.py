"""Exception types shared across the package."""


class SiqrError(Exception):
    """Base class for all package errors."""


class SchemaError(SiqrError):
    """A document does not match the expected structure."""

    def __init__(self, path, reason):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class ValidationError(SiqrError):
    """A structurally valid object violates a model condition."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class EvaluationError(SiqrError):
    """A model quantity evaluated to a non-finite value."""


class QuadratureError(SiqrError):
    pass


class LinearizationUndefined(SiqrError):
    pass


class PreconditionError(SiqrError):
    pass


class IntegrationError(SiqrError):
    """Raised when an integration cannot proceed.

    ``t`` is the time at which the integrator gave up.
    """

    def __init__(self, t, reason, component=None):
        self.t = t
        self.reason = reason
        self.component = component
        msg = f"integration failed at t={t!r}: {reason}"
        if component is not None:
            msg += f" (component {component})"
        super().__init__(msg)


class ProbeInvalid(SiqrError):
    pass


class PathError(SiqrError):
    """A dotted parameter path does not resolve to a numeric leaf."""

    def __init__(self, path, reason):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")
