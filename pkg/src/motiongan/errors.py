"""Exception types shared across the package."""


class MotionGanError(Exception):
    pass


class DimensionError(MotionGanError, ValueError):
    pass


class ContractError(MotionGanError, ValueError):
    pass


class DegeneracyError(MotionGanError, ValueError):
    pass


class EvaluationError(MotionGanError, ArithmeticError):
    pass


class AlignmentError(MotionGanError, ValueError):
    pass


class InsufficientLengthError(MotionGanError, ValueError):
    pass


class ParseError(MotionGanError, ValueError):
    """Malformed or truncated file. ``offset`` is the byte/line position of the fault."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class ValidationError(MotionGanError, ValueError):
    pass


class NumericFailure(MotionGanError, ArithmeticError):
    pass
