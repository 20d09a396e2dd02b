"""Exception hierarchy.

Everything derives from :class:`ModelError` so the CLI can map domain and
solver failures to exit code 1 with a single ``except``.
"""

from __future__ import annotations


class ModelError(ValueError):
    """Base class for domain and solver errors."""


class NonPositiveRate(ModelError):
    pass


class GammaNotLessThanOne(ModelError):
    pass


class Unstable(ModelError):
    """The data queue has no steady state (utilization >= 1)."""


class NoRootInBracket(ModelError):
    pass


class InfeasibleOverflowTarget(ModelError):
    """The overflow target lies below the attainable lower bound 1 - z."""


class TruncationLimitExceeded(ModelError):
    pass


class SolverNotConverged(ModelError):
    pass
