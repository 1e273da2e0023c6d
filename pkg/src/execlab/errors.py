"""Exception taxonomy shared across the package.

The CLI maps these onto its exit codes: config problems -> 3, numeric
failures (root finding, fitting, log domain) -> 4, model-assumption
violations -> 5.
"""


class ExeclabError(Exception):
    """Base class for all package errors."""


class ConfigError(ExeclabError):
    """Invalid configuration value or unparseable config file."""


class CorruptedStateError(ExeclabError):
    """A market state violates a structural invariant (diagnostic check)."""


class InsufficientDepthError(ExeclabError):
    """A forced execution ran out of counterparties before completing."""


class NoRootError(ExeclabError):
    """The strategy equation has no sign change inside the search bracket."""


class AssumptionViolatedError(ExeclabError):
    """A hypothesis of the optimal-strategy theorems fails on the inputs."""


class NonPositiveLogArgumentError(ExeclabError):
    """Decay curve fell to or below the permanent level at the queried time."""


class CalibrationError(ExeclabError):
    """A calibration campaign could not produce a usable result."""
