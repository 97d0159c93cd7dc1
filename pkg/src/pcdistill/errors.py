"""Exception types shared across the package."""


class DistillError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(DistillError):
    """Operand shapes are incompatible."""


class ParameterError(DistillError):
    """A hyperparameter or call contract was violated."""


class DegenerateGroupError(DistillError):
    """A softmax group has no member classes."""


class DataError(DistillError):
    """Dataset contents are invalid (bad labels, malformed rows)."""


class ConfigError(DistillError):
    """Experiment configuration is invalid or inconsistent."""


class DivergenceError(DistillError):
    """Training produced a non-finite loss."""
