"""Exception types shared across the package."""


class PuhdrError(Exception):
    """Base class for all errors raised by puhdr."""


class DomainError(PuhdrError, ValueError):
    """Input lies outside the mathematical domain of an operation."""


class ContractError(PuhdrError, ValueError):
    """Caller violated a precondition (shapes, tags, dimensions)."""


class ParseError(PuhdrError, ValueError):
    """Malformed file content. ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class UnsupportedFormatError(ParseError):
    """Well-formed file of a variant this package does not read."""


class TrainingError(PuhdrError, RuntimeError):
    """Optimization diverged; ``step`` is the offending iteration."""

    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"{message} at step {step}")
