"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ``CheckFailure`` -> 1, ``UsageError`` and
``ParseError`` -> 2, ``NumericFailure`` -> 3.
"""


class MicrogenError(Exception):
    pass


class UsageError(MicrogenError, ValueError):
    pass


class ParseError(UsageError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class OrderUnderflow(UsageError):
    """Requested output order exceeds the data stored in a jet."""


class DomainViolation(MicrogenError, ValueError):
    """log/sqrt of a nonpositive constant term, matrix log outside its ball, ..."""


class MalformedGeneratingFunction(MicrogenError, ValueError):
    pass


class NumericFailure(MicrogenError, ArithmeticError):
    pass


class NewtonFailure(NumericFailure):
    pass


class DegeneracyError(NumericFailure):
    pass


class CheckFailure(MicrogenError):
    """A verification ran but its defect exceeded the tolerance."""
