"""Exception hierarchy shared by every module."""


class EngineError(Exception):
    """Base class for all errors raised by srengine."""


class InvalidDimensionError(EngineError, ValueError):
    pass


class InvalidStateError(EngineError, ValueError):
    pass


class TruncationError(EngineError):
    """A field state carries non-negligible population in the top Fock level."""


class DomainError(EngineError, ValueError):
    pass


class MasingThresholdError(EngineError):
    """Atomic gain exceeds cavity loss: no stationary reservoir description."""


class DegenerateSteadyStateError(EngineError):
    pass


class StepSizeUnderflowError(EngineError):
    pass


class UndefinedCorrelationError(EngineError, ZeroDivisionError):
    pass


class NegativeWorkError(EngineError):
    """n_sr < n_th: the cycle would consume work."""


class FitError(EngineError, ValueError):
    pass


class InsufficientEventsError(EngineError):
    pass


class ConfigError(EngineError, ValueError):
    pass
