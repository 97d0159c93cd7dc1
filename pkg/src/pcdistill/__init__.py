"""Progressive class-level knowledge distillation at desk scale.

A deterministic, config-driven distillation engine: vanilla logit
distillation plus a progressive variant that ranks classes per sample by the
teacher-student logit gap, distills masked class groups over bidirectional
stage schedules, and weights each group's KL term by the cosine distance of
the two group distributions. Built on a self-contained float64 reverse-mode
autodiff core, with an independent loop-based oracle for verification.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    DegenerateGroupError,
    DistillError,
    DivergenceError,
    ParameterError,
    ShapeError,
)
from .tensor import Tensor

__all__ = [
    "Tensor",
    "ConfigError",
    "DataError",
    "DegenerateGroupError",
    "DistillError",
    "DivergenceError",
    "ParameterError",
    "ShapeError",
    "__version__",
]
