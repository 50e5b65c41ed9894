class BdnnError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(BdnnError, ValueError):
    pass


class ValidationError(BdnnError, ValueError):
    pass


class FormatError(BdnnError, ValueError):
    """A binary file did not match its expected layout."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(BdnnError, ArithmeticError):
    """Non-finite values appeared where finite ones are required."""
