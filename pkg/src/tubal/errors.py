"""Exception types raised across the package."""


class TubalError(Exception):
    """Base class for every error raised by :mod:`tubal`."""


class ShapeMismatch(TubalError, ValueError):
    pass


class InvalidTensor(TubalError, ValueError):
    pass


class SymmetryViolation(TubalError, ValueError):
    pass


class NumericalFailure(TubalError, ArithmeticError):
    pass


class SingularInput(NumericalFailure):
    pass


class IndexOutOfRange(TubalError, IndexError):
    pass


class NotOrthonormal(TubalError, ValueError):
    pass


class InvalidDims(TubalError, ValueError):
    pass


class InvalidRank(TubalError, ValueError):
    pass


class DivisionByZero(TubalError, ZeroDivisionError):
    pass


class Divergence(NumericalFailure):
    """Iterates blew up; ``t`` is the offending iteration."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class RankDeficientSignal(NumericalFailure):
    """Projection of the iterate onto the ground-truth subspace lost rank."""

    def __init__(self, message, slice_index=None, sigma_r=None):
        super().__init__(message)
        self.slice_index = slice_index
        self.sigma_r = sigma_r


class ParseError(TubalError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ValidationError(TubalError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class FormatError(TubalError, ValueError):
    pass


class NonPositiveOnLogAxis(TubalError, ValueError):
    pass
