"""Exception types.

Two families: :class:`ValidationError` for bad input (the CLI maps these to
exit code 2) and :class:`NumericalError` for failures of a numerical method
(exit code 3).
"""


class CBError(Exception):
    pass


class ValidationError(CBError, ValueError):
    pass


class NumericalError(CBError, ArithmeticError):
    pass


class OutOfRange(ValidationError):
    def __init__(self, parameter, value, allowed):
        self.parameter = parameter
        self.value = value
        super().__init__(f"{parameter}={value!r} out of range; expected {allowed}")


class GridTooSmall(ValidationError):
    pass


class GreyConditionFails(ValidationError):
    pass


class NotRegularlyVarying(ValidationError):
    pass


class StepPolicyInvalid(ValidationError):
    pass


class PathNeverPositive(ValidationError):
    pass


class NotExtinct(ValidationError):
    pass


class ScaleTooCoarse(ValidationError):
    pass


class EmptyEnsemble(ValidationError):
    pass


class RangeError(NumericalError):
    pass


class QuadratureNotConverged(NumericalError):
    pass


class DegenerateCondition(NumericalError):
    pass


class InversionUnstable(NumericalError):
    pass
