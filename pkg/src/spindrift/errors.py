"""Exception hierarchy shared across the package."""


class SpindriftError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SpindriftError, ValueError):
    """Malformed arguments: wrong shapes, non-finite values, bad counts."""


class GeometryError(SpindriftError):
    """Geometric preconditions violated (off-boundary query, projection failure)."""


class UnsupportedOperationError(SpindriftError):
    """Operation not defined for this domain variant."""


class FieldError(SpindriftError):
    """Coefficient-field invariant violated (non-tangential push, bad damping)."""


class CertificateError(SpindriftError):
    """A feasibility certificate could not be produced (positive-span failure)."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class DriverValidationError(SpindriftError):
    """Inconsistent bounded-variation driver; carries the offending segment index."""

    def __init__(self, message, segment_index=None):
        super().__init__(message)
        self.segment_index = segment_index


class NumericsError(SpindriftError):
    """Simulation aborted on overflow/NaN; carries the diagnostic step index."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class InsufficientDataError(SpindriftError):
    """Estimator asked to produce output from empty or degenerate input."""


class ConfigError(SpindriftError):
    """Run-configuration parse/validation failure; carries a line number when known."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
