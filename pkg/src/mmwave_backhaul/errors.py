"""Exception types shared across the package."""


class SingularCouplingError(ValueError):
    """The multi-user stream-coupling matrix is numerically singular."""


class InsufficientMeasurementsError(ValueError):
    """Fewer scalar observations than unknowns in a least-squares fit."""


class EstimationFailedError(RuntimeError):
    """The estimation pipeline could not produce a usable channel estimate."""


class ConfigError(ValueError):
    """Base class for configuration problems (CLI exit code 2)."""


class ConfigNotFoundError(ConfigError):
    """Configuration file does not exist."""


class ConfigSyntaxError(ConfigError):
    """Configuration file is not syntactically valid."""


class ConfigValidationError(ConfigError):
    """Configuration violates a documented invariant."""
