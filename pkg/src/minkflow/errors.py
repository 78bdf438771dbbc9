class MinkflowError(Exception):
    """Base class for library errors."""


class GridError(MinkflowError, ValueError):
    """Invalid grid request or a field that does not live on the grid."""


class NonConvexError(MinkflowError):
    """A support field whose radii matrix left the positive cone."""

    def __init__(self, message, lambda_min=None, node=None):
        super().__init__(message)
        self.lambda_min = lambda_min
        self.node = node


class RegimeError(MinkflowError, ValueError):
    """Exponents outside every admissible case, or an excluded boundary."""


class StepFailure(MinkflowError):
    """The time step underflowed while trial steps kept being rejected."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class ConfigError(MinkflowError, ValueError):
    """Invalid run configuration; ``line`` points into the config file."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = f"{path or '<config>'}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)
