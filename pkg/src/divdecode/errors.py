"""Exception hierarchy shared across the package."""


class DecodeError(Exception):
    """Base class for all package errors."""


class ValidationError(DecodeError, ValueError):
    """Bad arguments, configuration values or token ids."""


class ParseError(ValidationError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"line {lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)


class ConstructionError(ValidationError):
    """A model could not be built from the given data."""


class CapabilityError(DecodeError, TypeError):
    """The model does not support the requested operation (e.g. perturbation)."""


class BudgetExceededError(DecodeError):
    """An exhaustive enumeration would exceed its guard."""


class UndefinedMetricError(DecodeError, ValueError):
    """A metric has no defined value for the given candidates."""
