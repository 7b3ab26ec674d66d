"""Exception hierarchy for crlbpf."""


class CrlbpfError(Exception):
    """Base class for all errors raised by this package."""


class AssumptionError(CrlbpfError, ValueError):
    """The model violates the rank condition rank(H G) = rank(G) = dim_d."""


class IllConditionedError(CrlbpfError, ArithmeticError):
    """A matrix that must be inverted is singular or too badly conditioned."""


class IdentifiabilityError(IllConditionedError):
    """The adversary's window cannot pin down the older inputs."""


class WindowNotReadyError(CrlbpfError):
    """Fewer estimates are stored than the window requires."""


class OracleHorizonError(CrlbpfError, ValueError):
    """The batch (growing-size) oracle was asked for a step beyond its guard."""


class DimensionError(CrlbpfError, ValueError):
    """Array shapes do not agree with the model dimensions."""
