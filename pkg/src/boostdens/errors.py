"""Exception hierarchy shared by every boostdens module."""


class BoostDensError(Exception):
    """Base class for all library errors."""


class DomainError(BoostDensError, ValueError):
    """An argument lies outside the open domain of a function."""


class DimensionError(BoostDensError, ValueError):
    pass


class AlphaRangeError(BoostDensError, ValueError):
    pass


class RangeError(BoostDensError, ValueError):
    pass


class EstimatorUnavailable(BoostDensError):
    pass


class EmptySampleError(BoostDensError, ValueError):
    pass


class DegenerateClassifier(BoostDensError):
    """Raised when a classifier is identically zero on the samples it is scored on."""


class DegenerateSample(BoostDensError, ValueError):
    pass


class DegenerateRange(BoostDensError, ValueError):
    pass


class NonFiniteLogDensity(BoostDensError):
    pass


class PreconditionUnmet(BoostDensError):
    """No generated instance satisfied a checker's hypothesis."""


class ConfigError(BoostDensError, ValueError):
    pass


class ParseError(BoostDensError, ValueError):
    pass
