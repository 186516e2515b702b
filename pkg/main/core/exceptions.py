"""Error types raised by the solver stack.

Input validation errors also derive from ValueError (or IndexError) so
callers may catch either the specific class or the builtin.
"""


class IrlsError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(IrlsError, ValueError):
    pass


class InvalidDimensions(IrlsError, ValueError):
    pass


class InvalidP(IrlsError, ValueError):
    pass


class InvalidWeights(IrlsError, ValueError):
    pass


class NonPositiveEps(IrlsError, ValueError):
    pass


class EmptyResidual(IrlsError, ValueError):
    pass


class InvalidConfiguration(IrlsError, ValueError):
    pass


class NonFiniteEvaluation(IrlsError, ArithmeticError):
    pass


class JacobianUnavailable(IrlsError, NotImplementedError):
    pass


class InnerSolverError(IrlsError):
    pass


class SingularNormalEquations(InnerSolverError):
    pass


class AllStartsFailed(IrlsError):
    pass


class DegenerateSample(IrlsError, ValueError):
    pass


class NonPositiveAlpha(IrlsError, ValueError):
    pass


class TraceTooShort(IrlsError, ValueError):
    pass


class DegeneratePair(IrlsError, ValueError):
    pass


class NonPositiveCHat(IrlsError, ValueError):
    pass


class IndexOutOfRange(IrlsError, IndexError):
    pass


class ParseError(IrlsError, ValueError):
    """Malformed problem or experiment file; `line_number` is 1-based."""

    def __init__(self, message: str, line_number: int = 0):
        self.line_number = line_number
        if line_number:
            message = f"line {line_number}: {message}"
        super().__init__(message)
