"""Exception types raised across the package."""


class HsoIrlError(Exception):
    """Base class for all package errors."""


class IntegrationFault(HsoIrlError):
    """A Runge-Kutta stage evaluated to a non-finite value."""

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"non-finite vector field value at t={t!r}")


class SingularityError(HsoIrlError):
    """A matrix that must be inverted is singular."""


class SynthesisFailure(HsoIrlError):
    """The Riccati integration did not reach its fixed point."""

    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (last residual {residual:.3e})")


class UnsupportedConfiguration(HsoIrlError):
    """The requested construction is outside what the package supports."""


class ExtractionError(HsoIrlError):
    """Cost matrices cannot be extracted from the current weights."""


class DimensionError(HsoIrlError, ValueError):
    """Array shapes are inconsistent."""


class ConfigError(HsoIrlError):
    """A run configuration failed to parse or validate."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
