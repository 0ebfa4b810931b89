"""Exception hierarchy for metanet."""


class MetanetError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(MetanetError, ValueError):
    pass


# core
class EmptyMetapopulation(MetanetError, ValueError):
    pass


class DuplicateZone(MetanetError, ValueError):
    pass


class NonPositivePopulation(MetanetError, ValueError):
    pass


class InvalidSeries(MetanetError, ValueError):
    pass


class InvalidNetwork(MetanetError, ValueError):
    pass


class InvalidConfig(MetanetError, ValueError):
    pass


# dynamics
class ExhaustedPopulation(MetanetError, ArithmeticError):
    """A zone's susceptible pool hit zero, so its incidence rate is undefined."""


# features
class MissingCentroid(MetanetError, ValueError):
    pass


class DegenerateDistance(MetanetError, ValueError):
    pass


class NegativeFeature(MetanetError, ValueError):
    pass


class DegenerateFeature(MetanetError, ValueError):
    pass


# inference
class NumericalBlowup(MetanetError, FloatingPointError):
    pass


class Diverged(MetanetError, RuntimeError):
    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class NoSignal(MetanetError, ValueError):
    pass


# evaluation
class ZeroNetwork(MetanetError, ValueError):
    pass


class AllZeroActuals(MetanetError, ValueError):
    pass


class InsufficientSupport(MetanetError, ValueError):
    pass


class NoConvergence(MetanetError, RuntimeError):
    pass
