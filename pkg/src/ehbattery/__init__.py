"""Battery sizing for energy-harvesting sensor nodes with opportunistic contacts."""

from .analytics import (
    AnalyticSolution,
    NodeRates,
    analyze_node,
    overflow_probability,
    solve_depletion_probability,
    validate_rates,
)
from .errors import (
    GammaNotLessThanOne,
    InfeasibleOverflowTarget,
    ModelError,
    NonPositiveRate,
    NoRootInBracket,
    SolverNotConverged,
    TruncationLimitExceeded,
    Unstable,
)
from .sizing import (
    Binding,
    DesignTargets,
    SizingResult,
    binding_constraint,
    k_alpha,
    k_beta,
    size_battery,
    to_physical_capacity,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticSolution",
    "Binding",
    "DesignTargets",
    "GammaNotLessThanOne",
    "InfeasibleOverflowTarget",
    "ModelError",
    "NodeRates",
    "NonPositiveRate",
    "NoRootInBracket",
    "SizingResult",
    "SolverNotConverged",
    "TruncationLimitExceeded",
    "Unstable",
    "analyze_node",
    "binding_constraint",
    "k_alpha",
    "k_beta",
    "overflow_probability",
    "size_battery",
    "solve_depletion_probability",
    "to_physical_capacity",
    "validate_rates",
]
