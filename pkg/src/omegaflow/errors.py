"""Exception types shared across the package."""


class OmegaFlowError(Exception):
    """Base class for all package errors."""


class NonFiniteState(OmegaFlowError):
    """A trajectory left floating-point range.

    ``index`` is the position of the failing sample when raised from an
    orbit sampler, otherwise ``None``.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class UnknownSystem(OmegaFlowError, KeyError):
    def __init__(self, name, valid):
        self.name = name
        self.valid = tuple(valid)
        super().__init__(f"unknown system {name!r}; valid names: {', '.join(self.valid)}")

    def __str__(self):
        return self.args[0]


class Escaped(OmegaFlowError):
    """A sample point left the grid domain under ``escape_policy='error'``."""

    def __init__(self, point):
        self.point = tuple(float(v) for v in point)
        super().__init__(f"point {self.point} escaped the grid domain")


class EmptyInput(OmegaFlowError, ValueError):
    pass


class EscapeDominated(OmegaFlowError):
    """Every member of the seed set has escaping images."""


class SpaceMismatch(OmegaFlowError, ValueError):
    pass


class ConfigError(OmegaFlowError, ValueError):
    pass
