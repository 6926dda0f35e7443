"""Exception types raised across the package."""


class GameError(Exception):
    """Base class for all package errors."""


class DomainError(GameError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class ShapeError(GameError, ValueError):
    """Two objects that must share structure do not."""


class ConfigurationError(GameError, ValueError):
    """A required oracle, grid or setting is missing."""


class ConvergenceError(GameError, RuntimeError):
    """An iteration ran out of budget before meeting its tolerance."""

    def __init__(self, message, last=None, residual=None):
        super().__init__(message)
        self.last = last
        self.residual = residual


class RootFindError(GameError, RuntimeError):
    """Scalar root finding failed; carries the diagnostics gathered so far."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ResolutionError(GameError, RuntimeError):
    """A grid search was too coarse to find any admissible point."""


class ParseError(GameError, ValueError):
    """A structured input document could not be parsed or validated."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(loc + message)
        self.path = None if path is None else str(path)
        self.line = line
        self.detail = message
