"""Exception types shared across the package."""


class CatIrtError(Exception):
    """Base class for all package-specific errors."""


class ParseError(CatIrtError):
    """An input file could not be parsed; carries the offending line number."""

    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class ValidationError(CatIrtError):
    """A configuration or data value violates its contract."""


class InsufficientDataError(ValidationError):
    """Filtering removed all usable observations."""


class BankExhaustedError(CatIrtError):
    """Item selection was asked to pick from a bank with no unadministered items."""


class DegeneratePosteriorError(CatIrtError):
    """The ability posterior underflowed to zero mass everywhere."""


class UndefinedSemError(CatIrtError):
    """SEM requested for an item set with zero total information."""


class UnknownItemError(CatIrtError):
    """A replayed session references an item that is not in the bank."""
