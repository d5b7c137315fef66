"""Exception types shared across the package."""


class PathoPaintError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(PathoPaintError, ValueError):
    """An argument value violates an operation's preconditions."""


class ShapeError(PathoPaintError, ValueError):
    """Array arguments have incompatible or invalid shapes."""


class EmptyRegionError(PathoPaintError, ValueError):
    """A pooling region contains no active cells."""


class EmptyBankError(PathoPaintError, ValueError):
    """No patches qualified for the embedding bank."""


class ExhaustedClusterError(PathoPaintError, LookupError):
    """A cluster holds no donor embedding from a different source image."""


class ContractError(PathoPaintError, ValueError):
    """An input violates a documented operation contract."""


class DegenerateLossError(PathoPaintError, ArithmeticError):
    """A loss is undefined because every pixel was excluded."""


class StageError(PathoPaintError, RuntimeError):
    """A pipeline stage failed. Carries the stage name for CLI reporting."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
