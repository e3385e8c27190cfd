"""Exception hierarchy.

``ValidationError`` subclasses signal a bad model or config (CLI exit 1);
everything else under ``HtnError`` is a runtime failure (CLI exit 2).
"""


class HtnError(Exception):
    pass


class ValidationError(HtnError):
    pass


class ConfigError(ValidationError):
    pass


class CriticalLoadViolation(ValidationError):
    pass


class NonMonotoneTheta(ValidationError):
    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class InvalidHazard(ValidationError):
    pass


class NonPositiveParam(ValidationError):
    pass


class RangeError(ValidationError):
    pass


class InvalidRate(ValidationError):
    pass


class DrainTimeout(HtnError):
    pass


class DeviatorNotArrived(HtnError):
    def __init__(self, message, reference=None):
        super().__init__(message)
        self.reference = reference


class HorizonExceedsTrace(HtnError):
    pass


class CensoredWait(HtnError):
    pass


class SlqLimitUndefined(HtnError):
    pass


class InvalidStart(HtnError):
    pass


class EmptySample(HtnError):
    pass
