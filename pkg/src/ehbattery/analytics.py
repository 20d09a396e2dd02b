"""Steady-state analysis of the coupled energy (M/M/1/K) and data (M/M/1) queues.

Each queue sees the connection stream thinned by the probability that the
other queue is non-empty:

* energy queue: arrivals ``lambda_E``, service ``lambda_C * (1 - P_D0)``
* data queue:   arrivals ``lambda_D``, service ``lambda_C * (1 - P_E0)``

Substituting one into the other leaves a single equation in
``zeta = (1 - P_E0) / gamma`` (which is also the energy-queue utilization)
that depends only on ``gamma = lambda_D / lambda_E`` and ``K``::

    1 - gamma * zeta = (1 - zeta) / (1 - zeta**(K + 1))

Writing the right-hand side as ``1 / (1 + zeta + ... + zeta**K)`` and
cancelling the trivial root at ``zeta = 0`` turns this into

    full(zeta, K) == 1 - gamma

where ``full`` is the M/M/1/K probability of a full buffer. ``full`` is
strictly increasing in ``zeta`` (0 at the origin, 1 at infinity), so the
positive root exists and is unique for every ``0 < gamma < 1``. A
consequence worth knowing: the decoupled model predicts an overflow
probability of exactly ``1 - gamma`` regardless of ``K``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import GammaNotLessThanOne, NonPositiveRate, NoRootInBracket, Unstable

#: |zeta - 1| below this switches to the L'Hopital limit 1/(K+1).
EPS_SWITCH = 1e-9
ZETA_TOL = 1e-12
MAX_BISECTIONS = 200


@dataclass(frozen=True)
class NodeRates:
    """Poisson rates at one node, all in events per second.

    Construction only rejects negative or non-finite values; zero rates are
    legal here (the simulator accepts them) and are refused by
    :func:`validate_rates` for anything analytic.
    """

    lambda_D: float
    lambda_E: float
    lambda_C: float

    def __post_init__(self) -> None:
        for name in ("lambda_D", "lambda_E", "lambda_C"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise NonPositiveRate(f"{name} must be finite and >= 0, got {value!r}")

    @property
    def gamma(self) -> float:
        return self.lambda_D / self.lambda_E

    @property
    def gamma_D(self) -> float:
        return self.lambda_D / self.lambda_C

    @property
    def gamma_E(self) -> float:
        return self.lambda_E / self.lambda_C


@dataclass(frozen=True)
class AnalyticSolution:
    capacity_K: int
    p_D0: float
    p_E0: float
    p_EK: float
    rho_D: float
    rho_E: float
    zeta: float

    def as_dict(self) -> dict[str, float]:
        return {
            "capacity_K": self.capacity_K,
            "p_D0": self.p_D0,
            "p_E0": self.p_E0,
            "p_EK": self.p_EK,
            "rho_D": self.rho_D,
            "rho_E": self.rho_E,
            "zeta": self.zeta,
        }


def _check_capacity(K) -> int:
    if isinstance(K, bool) or int(K) != K or K < 1:
        raise ValueError(f"capacity K must be a positive integer, got {K!r}")
    return int(K)


def _check_gamma(gamma: float) -> None:
    if not math.isfinite(gamma) or gamma <= 0:
        raise ValueError(f"gamma must be positive and finite, got {gamma!r}")
    if gamma >= 1:
        raise GammaNotLessThanOne(f"gamma = {gamma:.12g} must be < 1")


# M/M/1/K tail probabilities. ``k`` may be any real >= 0 so that the sizing
# formulas can be round-tripped at non-integer capacities.


def mm1k_empty(rho: float, k: float, switch: float = EPS_SWITCH) -> float:
    """P(empty) of an M/M/1/k queue with utilization ``rho``.

    ``switch`` is the half-width around ``rho = 1`` where the limit
    ``1/(k+1)`` is returned. The expm1 forms stay accurate up to ``rho == 1``
    itself, so the solver passes ``switch=0`` to keep the residual smooth.
    """
    if rho == 1.0 or abs(rho - 1.0) < switch:
        return 1.0 / (k + 1.0)
    t = math.log(rho)
    if rho < 1.0:
        return math.expm1(t) / math.expm1((k + 1.0) * t)
    # (rho - 1)/(rho**(k+1) - 1) rewritten with negative powers
    return math.exp(-k * t) * math.expm1(-t) / math.expm1(-(k + 1.0) * t)


def mm1k_full(rho: float, k: float, switch: float = EPS_SWITCH) -> float:
    """P(full) of an M/M/1/k queue with utilization ``rho``."""
    if rho == 1.0 or abs(rho - 1.0) < switch:
        return 1.0 / (k + 1.0)
    t = math.log(rho)
    if rho > 1.0:
        return math.expm1(-t) / math.expm1(-(k + 1.0) * t)
    return math.exp(k * t) * math.expm1(t) / math.expm1((k + 1.0) * t)


def depletion_residual(gamma: float, zeta: float, K: float) -> float:
    """Residual of the fixed-point equation in its original form."""
    return (1.0 - gamma * zeta) - mm1k_empty(zeta, K, switch=0.0)


def _solve_zeta(gamma: float, k: float, xtol: float = ZETA_TOL) -> float:
    target = 1.0 - gamma

    def excess(z: float) -> float:
        return mm1k_full(z, k, switch=0.0) - target

    # excess(0) = -target < 0; excess(1/gamma) > 0 always.
    cap = 1.0 / gamma
    hi = 1.0
    while hi < cap and excess(hi) <= 0:
        hi *= 2.0
    hi = min(hi, cap)
    lo = 0.0
    if excess(hi) <= 0:
        if hi == cap:
            # excess(1/gamma) > 0 exactly; a non-positive value is rounding,
            # i.e. the root is within an ulp of 1/gamma (large K)
            return cap
        raise NoRootInBracket(f"no sign change on (0, {hi}] for gamma={gamma}, K={k}")

    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= xtol * max(1.0, lo):
            break
    else:
        raise NoRootInBracket(f"bisection did not converge for gamma={gamma}, K={k}")
    return 0.5 * (lo + hi)


def solve_zeta(gamma: float, K: int) -> float:
    """Root ``zeta`` of the fixed-point equation for integer ``K``."""
    _check_gamma(gamma)
    return _solve_zeta(gamma, _check_capacity(K))


def solve_depletion_probability(gamma: float, K: int) -> float:
    """Depletion probability P_E0 of the decoupled model.

    Parameters
    ----------
    gamma : float
        ``lambda_D / lambda_E``, strictly between 0 and 1.
    K : int
        Battery capacity in energy packets.

    Returns
    -------
    float
        The unique P_E0 in (0, 1). Evaluated as the M/M/1/K empty
        probability at the solved ``zeta`` rather than ``1 - gamma*zeta``,
        which cancels catastrophically once P_E0 is tiny.
    """
    _check_gamma(gamma)
    K = _check_capacity(K)
    zeta = _solve_zeta(gamma, K)
    p_E0 = mm1k_empty(zeta, K, switch=0.0)
    if abs(depletion_residual(gamma, zeta, K)) > 1e-10:
        raise NoRootInBracket(f"fixed-point residual too large at gamma={gamma}, K={K}")
    return p_E0


def overflow_probability(zeta: float, K: int) -> float:
    """Probability the battery is full, given energy utilization ``zeta``."""
    if not (zeta > 0 and math.isfinite(zeta)):
        raise ValueError(f"zeta must be positive and finite, got {zeta!r}")
    return mm1k_full(zeta, _check_capacity(K))


def validate_rates(rates: NodeRates, K: int) -> NodeRates:
    """Check positivity, ``gamma < 1`` and data-queue stability at capacity ``K``."""
    K = _check_capacity(K)
    for name in ("lambda_D", "lambda_E", "lambda_C"):
        if not getattr(rates, name) > 0:
            raise NonPositiveRate(f"{name} must be > 0")
    if rates.gamma >= 1:
        raise GammaNotLessThanOne(f"gamma = lambda_D/lambda_E = {rates.gamma:.12g} must be < 1")
    p_E0 = solve_depletion_probability(rates.gamma, K)
    served = rates.lambda_C * (1.0 - p_E0)
    if rates.lambda_D >= served:
        raise Unstable(
            f"data queue unstable: lambda_D={rates.lambda_D:.12g} >= "
            f"lambda_C*(1-P_E0)={served:.12g} at K={K}"
        )
    return rates


def analyze_node(rates: NodeRates, K: int) -> AnalyticSolution:
    validate_rates(rates, K)
    gamma = rates.gamma
    zeta = _solve_zeta(gamma, K)
    p_E0 = mm1k_empty(zeta, K, switch=0.0)
    rho_D = rates.lambda_D / (rates.lambda_C * (1.0 - p_E0))
    p_D0 = 1.0 - rho_D
    rho_E = rates.lambda_E / (rates.lambda_C * (1.0 - p_D0))
    return AnalyticSolution(
        capacity_K=int(K),
        p_D0=p_D0,
        p_E0=p_E0,
        p_EK=overflow_probability(zeta, K),
        rho_D=rho_D,
        rho_E=rho_E,
        zeta=zeta,
    )
