"""Exception types raised across the package."""


class StgarchError(Exception):
    """Base class for all package errors."""


class DomainError(StgarchError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class NonFiniteError(StgarchError, ArithmeticError):
    """A recursion produced a non-finite residual or variance."""


class NumericalError(StgarchError, ArithmeticError):
    pass


class SingularDesign(StgarchError, ArithmeticError):
    """A regression block has a numerically singular precision matrix."""


class NotEnoughData(StgarchError, ValueError):
    pass


class NoConvergence(StgarchError, RuntimeError):
    pass


class DegenerateSample(StgarchError, ValueError):
    pass


class ExplosivePath(StgarchError, ArithmeticError):
    """Simulation kept overflowing after the allowed number of re-draws."""


class ParseError(StgarchError, ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NonPositivePrice(ParseError):
    pass


class ZeroDenominator(StgarchError, ZeroDivisionError):
    pass
