"""Exception types raised across the package."""


class OTError(Exception):
    """Base class for all library errors."""


class ValidationError(OTError, ValueError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NegativeEntry(ValidationError):
    pass


class MarginalSumOutOfRange(ValidationError):
    pass


class AllZeroCostWarning(UserWarning):
    """Emitted by normalize_cost when every cost entry is zero."""


class NonFiniteIterate(OTError, FloatingPointError):
    pass


class ZeroIterations(OTError, ValueError):
    pass


class NoConvergence(OTError, RuntimeError):
    pass


class NumericalUnderflow(OTError, FloatingPointError):
    pass


class TooLarge(OTError, ValueError):
    pass


class EmptyClass(OTError, ValueError):
    pass
