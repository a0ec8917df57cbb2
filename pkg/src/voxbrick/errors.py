"""Exception types shared across the package."""


class VoxbrickError(Exception):
    """Base class for all errors raised by voxbrick."""


class InputError(VoxbrickError, ValueError):
    """Caller supplied data that cannot be processed."""


class DimensionError(InputError):
    """Grid dimensions are incompatible with the requested operation."""


class GeometryError(InputError):
    """Mesh or point geometry is degenerate."""


class ParseError(InputError):
    """A text format could not be parsed.

    Attributes:
        lineno: 1-based line number where parsing failed.
        source: optional name of the file or stream.
    """

    def __init__(self, message, lineno, source=None):
        self.lineno = lineno
        self.source = source
        self.reason = message
        where = f"{source}:{lineno}" if source else f"line {lineno}"
        super().__init__(f"{where}: {message}")


class InvariantError(VoxbrickError):
    """An internal consistency check failed (a bug, not bad input)."""
