"""Exception hierarchy shared by all greencool modules."""


class GreencoolError(Exception):
    """Base class for every error raised by this package."""


class ParseError(GreencoolError, ValueError):
    """A text input (grid, manifest, config) could not be parsed."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ShapeError(GreencoolError, ValueError):
    pass


class IoError(GreencoolError, OSError):
    pass


class AlignmentError(GreencoolError, ValueError):
    def __init__(self, message, field=None, grid=None):
        self.field = field
        self.grid = grid
        super().__init__(message)


class ArgumentError(GreencoolError, ValueError):
    pass


class SchemaError(GreencoolError, ValueError):
    pass


class DuplicateError(GreencoolError, ValueError):
    pass


class ConfigError(GreencoolError, ValueError):
    pass


class DataError(GreencoolError, ValueError):
    """Input data cannot support the requested computation."""


class InsufficientData(DataError):
    pass


class DegenerateInput(DataError):
    pass


class DegenerateX(DegenerateInput):
    """Regressor has zero variance."""


class NearLimitError(DataError):
    """Mean temperature too close to the relative-cooling ceiling."""
