"""Exception types shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific type that applies rather than a bare RuntimeError.
"""

from __future__ import annotations


class UsageError(ValueError):
    """Bad configuration or arguments supplied by the caller (exit code 2)."""


class NumericFailure(RuntimeError):
    """A numeric procedure failed or diverged (exit code 3)."""


class UnboundedTimeError(RuntimeError):
    """A convergence time never crossed its threshold on the probed grid (exit code 4).

    Carries enough context to name the offending dimension in experiment
    drivers that aggregate over several dimensions.
    """

    def __init__(self, message: str, dim: int | None = None, diagnostics: dict | None = None):
        super().__init__(message)
        self.dim = dim
        self.diagnostics = diagnostics or {}
