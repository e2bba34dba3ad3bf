"""Exception hierarchy.

Every error carries a ``category`` used by the CLI to pick an exit code:
``config`` (2) for bad configuration or infeasible requests, ``data`` (3)
for malformed or inconsistent inputs, ``numeric`` (4) for runtime numeric
failures (divergence, degenerate references).
"""


class NeubmError(Exception):
    category = "data"


class GraphValidationError(NeubmError):
    """Structural invariant of a graph violated (bad edge index, mask overlap...)."""

    category = "data"


class DatasetParseError(NeubmError):
    """Malformed canonical dataset file; names the offending file and line."""

    category = "data"

    def __init__(self, message, file=None, line=None):
        loc = ""
        if file is not None:
            loc = f" [{file}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + loc)
        self.file = file
        self.line = line


class EmptyScopeError(NeubmError):
    category = "data"


class DensityUndefinedError(NeubmError):
    """Edge density needs at least two in-scope nodes."""

    category = "data"


class InfeasibleError(NeubmError):
    """Request cannot be satisfied (split too small, total_nodes < classes...)."""

    category = "config"


class ConfigError(NeubmError):
    category = "config"


class ShapeError(NeubmError):
    category = "data"


class NumericError(NeubmError):
    category = "numeric"


class TrainingFailureError(NumericError):
    """Training diverged; carries the epoch index."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DegenerateReferenceError(NumericError):
    """Neutral reference unusable (e.g. zero spread for the normalize variant)."""


class DegenerateRowError(NumericError):
    """A probability row collapsed to all-zero after post-softmax clamping."""


EXIT_CODES = {"config": 2, "data": 3, "numeric": 4}
