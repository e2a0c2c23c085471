class CskError(Exception):
    """Base class for every error raised by the simulator."""


class DomainError(CskError, ValueError):
    """A numeric argument lies outside the domain of the operation."""


class GridError(CskError, ValueError):
    """Traces or kernels live on incompatible time grids."""


class ConfigError(CskError):
    """Invalid scenario or configuration; `line` points into the source file."""

    def __init__(self, message, source=None, line=None):
        super().__init__(message)
        self.source = source
        self.line = line

    def __str__(self):
        message = super().__str__()
        if self.source and self.line:
            return f"{self.source}:{self.line}: {message}"
        if self.source:
            return f"{self.source}: {message}"
        return message


class WiringError(CskError):
    """An edge carries a species the receiving population does not sense."""


class LayoutError(CskError):
    """Structural problem in a circuit layout (cycle, dangling edge, bad station)."""


class SynthesisError(CskError):
    """The requested consortium cannot be synthesized."""


class EigenError(CskError):
    """Root bracketing failed while solving the eigenvalue equation."""
