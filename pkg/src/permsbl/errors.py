"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value violates a stated constraint."""


class DegenerateSignalError(ValueError):
    """The noiseless signal has zero energy, so an SNR target is meaningless."""


class AnchorError(ValueError):
    """An anchor assignment is out of range or not injective."""


class SizeGuardError(ValueError):
    """A brute-force enumeration was requested beyond its factorial guard."""


class NumericalError(RuntimeError):
    """A linear-algebra step failed even after a jitter retry."""


class UnsupportedParameterError(ValueError):
    """A parameter value for which the update equations are undefined."""
