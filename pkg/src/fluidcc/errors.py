"""Exception types raised by fluidcc."""


class FluidccError(Exception):
    """Base class for all library errors."""


class DomainError(FluidccError, ValueError):
    """An argument lies outside the domain of a model function."""


class ConfigError(FluidccError, ValueError):
    """A parameter set violates a configuration invariant."""


class NoEquilibrium(FluidccError, ArithmeticError):
    """The fixed-point relation has no root inside (0, C]."""


class WindowTooSmall(FluidccError, ValueError):
    pass


class EmptySeries(FluidccError, ValueError):
    pass
