"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class DomainError(ValueError):
    """An input lies outside the domain of an operation."""


class GraphError(ValueError):
    """A graph violates a structural precondition."""


class DataFormatError(ValueError):
    """A dataset file is malformed."""


class ConfigError(ValueError):
    """A run configuration is invalid."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, loss):
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss
