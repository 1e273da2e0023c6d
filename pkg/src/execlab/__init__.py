"""Market microstructure laboratory.

An agent-based order-book simulator (the opinion game), continuous
order-book impact models with constant and impact-dependent resilience,
closed-form optimal execution solvers, and the calibration pipeline that
links simulator and model so predicted and sampled execution costs can be
compared.
"""

__version__ = "0.1.0"

from .errors import (
    AssumptionViolatedError,
    CalibrationError,
    ConfigError,
    CorruptedStateError,
    InsufficientDepthError,
    NonPositiveLogArgumentError,
    NoRootError,
)
from .shape import ShapeTable
from .resilience import ResilienceCurve

__all__ = [
    "AssumptionViolatedError",
    "CalibrationError",
    "ConfigError",
    "CorruptedStateError",
    "InsufficientDepthError",
    "NonPositiveLogArgumentError",
    "NoRootError",
    "ResilienceCurve",
    "ShapeTable",
    "__version__",
]
