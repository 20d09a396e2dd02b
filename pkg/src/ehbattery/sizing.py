"""Closed-form battery sizing from depletion and overflow targets."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

from .analytics import NodeRates, _check_gamma, mm1k_empty
from .errors import InfeasibleOverflowTarget

EPS_SWITCH = 1e-9
TIE_TOL = 1e-12
# Slack when rounding a real capacity up, so 4.000000000000001 stays 4.
CEIL_SLACK = 1e-9


class Binding(str, enum.Enum):
    DEPLETION = "Depletion"
    OVERFLOW = "Overflow"
    TIE = "Tie"


@dataclass(frozen=True)
class DesignTargets:
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        _check_probability("alpha", self.alpha)
        _check_probability("beta", self.beta)


@dataclass(frozen=True)
class SizingResult:
    gamma: float
    alpha: float
    beta: float
    k_alpha_real: float | None
    k_beta_real: float | None
    capacity: int
    binding: Binding
    # depletion and overflow of the sizing model evaluated at ``capacity``
    depletion_at_capacity: float
    overflow_at_capacity: float

    def as_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "alpha": self.alpha,
            "beta": self.beta,
            "k_alpha": self.k_alpha_real,
            "k_beta": self.k_beta_real,
            "binding": self.binding.value,
            "capacity": self.capacity,
            "depletion_at_capacity": self.depletion_at_capacity,
            "overflow_at_capacity": self.overflow_at_capacity,
        }


class PhysicalCapacity(NamedTuple):
    value: float
    unit: str


def _check_probability(name: str, p: float) -> None:
    if not (0.0 < p < 1.0):
        raise ValueError(f"{name} must lie in (0, 1), got {p!r}")


def k_alpha(gamma: float, alpha: float) -> float:
    """Real-valued capacity at which depletion equals ``alpha``.

    ``ln((1-gamma)/alpha) / ln((1-alpha)/gamma)``, written with ``log1p`` of
    the common offset ``delta = 1 - alpha - gamma`` so both logarithms stay
    accurate as ``gamma`` approaches ``1 - alpha``, where the value tends to
    ``1/alpha - 1``.
    """
    _check_gamma(gamma)
    _check_probability("alpha", alpha)
    delta = (1.0 - alpha) - gamma
    if abs(delta) < EPS_SWITCH * (1.0 - alpha):
        return 1.0 / alpha - 1.0
    return math.log1p(delta / alpha) / math.log1p(delta / gamma)


def overflow_lower_bound(gamma: float, alpha: float) -> float:
    """Smallest attainable overflow target, ``1 - z`` with ``z = gamma/(1-alpha)``."""
    return max(0.0, 1.0 - gamma / (1.0 - alpha))


def _z_minus_one(gamma: float, alpha: float) -> float:
    return (gamma - (1.0 - alpha)) / (1.0 - alpha)


def is_overflow_feasible(gamma: float, alpha: float, beta: float) -> bool:
    """``(1-alpha)(1-beta) < gamma``, evaluated as ``1 + (z-1)/beta > 0``.

    Same expression the logarithm in :func:`k_beta` sees, so the two never
    disagree at the boundary. Feasibility always holds when
    ``beta + gamma >= 1``.
    """
    return 1.0 + _z_minus_one(gamma, alpha) / beta > 0.0


def k_beta(gamma: float, alpha: float, beta: float) -> float:
    """Real-valued capacity at which overflow equals ``beta``.

    With ``z = gamma/(1-alpha)`` this is ``ln((z+beta-1)/beta)/ln(z) - 1``,
    defined only when ``z + beta > 1``.
    """
    _check_gamma(gamma)
    _check_probability("alpha", alpha)
    _check_probability("beta", beta)
    if not is_overflow_feasible(gamma, alpha, beta):
        raise InfeasibleOverflowTarget(
            f"beta={beta:.12g} is not above the lower bound 1-z="
            f"{overflow_lower_bound(gamma, alpha):.12g} "
            f"((1-alpha)(1-beta) >= gamma for gamma={gamma:.12g}, alpha={alpha:.12g})"
        )
    w = _z_minus_one(gamma, alpha)
    if abs(w) < EPS_SWITCH:
        return 1.0 / beta - 1.0
    return math.log1p(w / beta) / math.log1p(w) - 1.0


def binding_constraint(gamma: float, beta: float) -> Binding:
    s = beta + gamma - 1.0
    if abs(s) <= TIE_TOL:
        return Binding.TIE
    return Binding.OVERFLOW if s < 0 else Binding.DEPLETION


def depletion_at(gamma: float, alpha: float, k: float) -> float:
    """Depletion of the sizing model at (possibly real) capacity ``k``.

    Utilization is pinned at ``(1-alpha)/gamma``, the value both closed forms
    are derived under.
    """
    return mm1k_empty((1.0 - alpha) / gamma, k, switch=0.0)


def overflow_at(gamma: float, alpha: float, k: float) -> float:
    # (1-z)/(1-z**(k+1)) is the M/M/1/k empty probability at utilization z
    return mm1k_empty(gamma / (1.0 - alpha), k, switch=0.0)


def ceil_capacity(x: float) -> int:
    return max(1, math.ceil(x - CEIL_SLACK * max(1.0, x)))


def size_battery(gamma: float | NodeRates, targets: DesignTargets) -> SizingResult:
    """Minimal integer capacity meeting both targets.

    ``gamma`` may be given directly or as :class:`NodeRates`. The larger of
    the two real capacities binds: overflow when ``beta + gamma < 1``,
    depletion otherwise. On a tie both real values are reported and the
    depletion value is rounded up.
    """
    if isinstance(gamma, NodeRates):
        gamma = gamma.gamma
    _check_gamma(gamma)
    alpha, beta = targets.alpha, targets.beta
    binding = binding_constraint(gamma, beta)

    ka = k_alpha(gamma, alpha)
    if binding is Binding.OVERFLOW:
        kb = k_beta(gamma, alpha, beta)  # infeasibility propagates
        capacity = ceil_capacity(kb)
    else:
        kb = k_beta(gamma, alpha, beta) if is_overflow_feasible(gamma, alpha, beta) else None
        capacity = ceil_capacity(ka)

    result = SizingResult(
        gamma=gamma,
        alpha=alpha,
        beta=beta,
        k_alpha_real=ka,
        k_beta_real=kb,
        capacity=capacity,
        binding=binding,
        depletion_at_capacity=depletion_at(gamma, alpha, capacity),
        overflow_at_capacity=overflow_at(gamma, alpha, capacity),
    )
    slack = 1e-9
    if binding is Binding.OVERFLOW:
        assert result.overflow_at_capacity <= beta + slack, result
    else:
        assert result.depletion_at_capacity <= alpha + slack, result
    return result


def to_physical_capacity(capacity: int, ep_size: float, unit: str = "") -> PhysicalCapacity:
    """``capacity * ep_size``; ``unit`` is carried along uninterpreted."""
    if isinstance(capacity, bool) or int(capacity) != capacity or capacity < 1:
        raise ValueError(f"capacity must be a positive integer, got {capacity!r}")
    if not (ep_size > 0 and math.isfinite(ep_size)):
        raise ValueError(f"ep_size must be positive, got {ep_size!r}")
    return PhysicalCapacity(int(capacity) * ep_size, unit)
