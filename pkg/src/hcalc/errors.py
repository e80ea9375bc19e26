"""Exception types shared across the package."""


class HCalcError(Exception):
    pass


class DimensionError(HCalcError, ValueError):
    pass


class OutOfDomainError(HCalcError, ValueError):
    pass


class ExprSyntaxError(HCalcError, ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(HCalcError, ValueError):
    def __init__(self, name, offset=None):
        where = "" if offset is None else f" at offset {offset}"
        super().__init__(f"unknown identifier {name!r}{where}")
        self.name = name
        self.offset = offset


class NonsmoothPointError(HCalcError, ArithmeticError):
    """A derivative was requested at a kink of abs/sqrt/sign."""


class HorizontalDegeneracy(HCalcError, ArithmeticError):
    def __init__(self, message, min_det=None):
        super().__init__(message)
        self.min_det = min_det


class MaxIterationsError(HCalcError, ArithmeticError):
    pass


class CurveExitError(HCalcError, ArithmeticError):
    def __init__(self, message, exit_time=None):
        super().__init__(message)
        self.exit_time = exit_time


class StepUnderflowError(HCalcError, ArithmeticError):
    pass


class EmptySampleError(HCalcError, ValueError):
    pass
