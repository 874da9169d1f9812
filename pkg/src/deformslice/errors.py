"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not satisfy an operation's contract."""


class NumericError(ArithmeticError):
    """Non-finite input where a finite value is required."""


class DomainError(ValueError):
    """Parameter lies outside the domain of a formula."""


class FormatError(ValueError):
    """Malformed binary tensor or params file."""


class SearchSpaceTooLarge(ValueError):
    """Refusal to enumerate a search space past the brute-force guard."""
