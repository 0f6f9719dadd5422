"""Exception types shared across the package.

The CLI maps these onto exit-code categories: ConfigError -> 2,
NumericError -> 3, TraceError / checkpoint IO -> 4.
"""


class TendbenchError(Exception):
    """Base class for all package errors."""


class InvalidActionError(TendbenchError, ValueError):
    """Discrete action id outside the 5-action codomain."""


class NumericError(TendbenchError, ArithmeticError):
    """Non-finite value where a finite one is required (forces, losses)."""


class LayoutError(TendbenchError, ValueError):
    """Layout validation failed; message lists every violation found."""


class EpisodeFinishedError(TendbenchError, RuntimeError):
    """step() called on an episode that already reached its horizon."""


class ShapeError(TendbenchError, ValueError):
    """Tensor/array shape mismatch; message names both shapes."""


class ConsistencyError(TendbenchError, ValueError):
    """Two inputs that must describe the same transition disagree."""


class ConfigError(TendbenchError, ValueError):
    """Experiment configuration could not be parsed or validated."""


class CheckpointError(TendbenchError, ValueError):
    """Checkpoint file is corrupt or incompatible with the built networks."""


class TraceError(TendbenchError, ValueError):
    """Episode trace file is corrupt; message reports the last valid step."""
