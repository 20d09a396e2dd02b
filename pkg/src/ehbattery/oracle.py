"""Exact stationary analysis of the joint (data, energy) Markov chain.

States are pairs ``(d, e)`` with ``0 <= d <= dmax`` and ``0 <= e <= K``,
indexed row-major: ``index = d * (K + 1) + e``. Transitions::

    (d, e) -> (d + 1, e)      rate lambda_D   if d < dmax  (lost at dmax)
    (d, e) -> (d, e + 1)      rate lambda_E   if e < K     (lost at K)
    (d, e) -> (d - 1, e - 1)  rate lambda_C   if d >= 1 and e >= 1

The data buffer is unbounded in the model; ``dmax`` is an artificial cap
chosen so that the stationary mass at ``d = dmax`` is negligible.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .analytics import NodeRates, _check_capacity, mm1k_empty
from .errors import NonPositiveRate, SolverNotConverged, TruncationLimitExceeded, Unstable

log = logging.getLogger(__name__)

DEFAULT_MASS_BUDGET = 1e-9
DEFAULT_DMAX_CAP = 100_000
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class JointChainSpec:
    rates: NodeRates
    capacity_K: int
    dmax: int

    def __post_init__(self) -> None:
        _check_capacity(self.capacity_K)
        if self.dmax < 1:
            raise ValueError("dmax must be >= 1")

    @property
    def n_states(self) -> int:
        return (self.dmax + 1) * (self.capacity_K + 1)


@dataclass(frozen=True)
class JointStationaryDistribution:
    spec: JointChainSpec
    probabilities: np.ndarray  # shape (dmax + 1, K + 1)
    residual_norm: float
    truncation_mass: float
    iterations: int = 0

    def __getitem__(self, de: tuple[int, int]) -> float:
        return float(self.probabilities[de])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d", "e", "probability"])
        P = self.probabilities
        for d in range(P.shape[0]):
            for e in range(P.shape[1]):
                w.writerow([d, e, repr(float(P[d, e]))])
        return buf.getvalue()


@dataclass(frozen=True)
class OracleSolution:
    p_E0_exact: float
    p_EK_exact: float
    p_D0_exact: float
    mean_data_queue_length: float

    def as_dict(self) -> dict[str, float]:
        return {
            "p_E0_exact": self.p_E0_exact,
            "p_EK_exact": self.p_EK_exact,
            "p_D0_exact": self.p_D0_exact,
            "mean_data_queue_length": self.mean_data_queue_length,
        }


def generator_matrix(spec: JointChainSpec) -> sp.csr_matrix:
    """Sparse infinitesimal generator ``Q`` (rows sum to zero)."""
    K, dmax = spec.capacity_K, spec.dmax
    r = spec.rates
    m = K + 1
    d, e = np.divmod(np.arange(spec.n_states), m)
    idx = d * m + e

    rows, cols, vals = [], [], []
    for mask, shift, rate in (
        (d < dmax, m, r.lambda_D),
        (e < K, 1, r.lambda_E),
        ((d >= 1) & (e >= 1), -(m + 1), r.lambda_C),
    ):
        if rate > 0:
            src = idx[mask]
            rows.append(src)
            cols.append(src + shift)
            vals.append(np.full(src.size, rate))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    Q = sp.coo_matrix((vals, (rows, cols)), shape=(spec.n_states, spec.n_states)).tocsr()
    Q = Q - sp.diags(np.asarray(Q.sum(axis=1)).ravel())
    return Q.tocsr()


def balance_residual(Q: sp.csr_matrix, pi: np.ndarray) -> float:
    """max_j |inflow_j - outflow_j| = max |(pi Q)_j|."""
    return float(np.max(np.abs(Q.T @ pi)))


def _solve_direct(Q: sp.csr_matrix) -> np.ndarray:
    n = Q.shape[0]
    A = Q.T.tocsr().tolil()
    A[n - 1, :] = np.ones(n)
    A = A.tocsc()
    b = np.zeros(n)
    b[n - 1] = 1.0
    lu = spla.splu(A)
    pi = lu.solve(b)
    for _ in range(2):  # iterative refinement
        pi += lu.solve(b - A @ pi)
    return pi


def _solve_gauss_seidel(
    Q: sp.csr_matrix, tol: float, max_iter: int, x0: np.ndarray | None = None
) -> tuple[np.ndarray, int]:
    """Gauss-Seidel sweeps on ``pi Q = 0`` with renormalization each sweep."""
    n = Q.shape[0]
    QT = Q.T.tocsr()
    lower = sp.tril(QT, k=0, format="csr")
    upper = sp.triu(QT, k=1, format="csr")
    x = np.full(n, 1.0 / n) if x0 is None else x0.copy()
    for it in range(1, max_iter + 1):
        x_new = spla.spsolve_triangular(lower, -(upper @ x), lower=True)
        x_new /= x_new.sum()
        delta = np.max(np.abs(x_new - x))
        x = x_new
        if delta < tol:
            return x, it
    raise SolverNotConverged(f"Gauss-Seidel hit {max_iter} sweeps (last change {delta:.3g})")


def stationary_distribution(
    spec: JointChainSpec,
    method: str = "direct",
    tol: float = 1e-12,
    max_iter: int = 1_000_000,
) -> JointStationaryDistribution:
    """Solve global balance for the truncated joint chain.

    ``method="direct"`` uses a sparse LU factorization with two rounds of
    iterative refinement; ``method="gauss-seidel"`` sweeps until successive
    iterates differ by less than ``tol`` in max-norm.
    """
    Q = generator_matrix(spec)
    iterations = 0
    if method == "direct":
        pi = _solve_direct(Q)
    elif method == "gauss-seidel":
        pi, iterations = _solve_gauss_seidel(Q, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")

    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    res = balance_residual(Q, pi)
    if not res < RESIDUAL_TOL:
        raise SolverNotConverged(f"balance residual {res:.3g} above {RESIDUAL_TOL:g}")
    P = pi.reshape(spec.dmax + 1, spec.capacity_K + 1)
    return JointStationaryDistribution(
        spec=spec,
        probabilities=P,
        residual_norm=res,
        truncation_mass=float(P[-1].sum()),
        iterations=iterations,
    )


def oracle_marginals(dist: JointStationaryDistribution, K: int | None = None) -> OracleSolution:
    P = dist.probabilities
    if K is not None and K != P.shape[1] - 1:
        raise ValueError(f"K={K} does not match distribution with K={P.shape[1] - 1}")
    data_marginal = P.sum(axis=1)
    return OracleSolution(
        p_E0_exact=float(P[:, 0].sum()),
        p_EK_exact=float(P[:, -1].sum()),
        p_D0_exact=float(P[0].sum()),
        mean_data_queue_length=float(np.arange(P.shape[0]) @ data_marginal),
    )


def exact_service_capacity(rates: NodeRates, K: int) -> float:
    """Long-run transfer rate when the data buffer never empties.

    With data always waiting, the battery is an M/M/1/K queue with arrival
    ``lambda_E`` and service ``lambda_C``; transfers happen at
    ``lambda_C * P(e >= 1)``. The untruncated joint chain is positive
    recurrent iff ``lambda_D`` is below this.
    """
    return rates.lambda_C * (1.0 - mm1k_empty(rates.lambda_E / rates.lambda_C, K))


def check_exact_stability(rates: NodeRates, K: int) -> None:
    for name in ("lambda_D", "lambda_E", "lambda_C"):
        if not getattr(rates, name) > 0:
            raise NonPositiveRate(f"{name} must be > 0")
    cap = exact_service_capacity(rates, K)
    if rates.lambda_D >= cap:
        raise Unstable(
            f"joint chain is not positive recurrent: lambda_D={rates.lambda_D:.12g} >= "
            f"lambda_C*P(e>=1 | data waiting)={cap:.12g}"
        )


def choose_truncation(
    rates: NodeRates,
    K: int,
    mass_budget: float = DEFAULT_MASS_BUDGET,
    dmax_cap: int = DEFAULT_DMAX_CAP,
    start: int = 32,
) -> tuple[int, JointStationaryDistribution]:
    """Smallest doubling of ``start`` whose truncation mass is below budget.

    Returns the chosen ``dmax`` and the distribution solved at it.
    """
    K = _check_capacity(K)
    check_exact_stability(rates, K)
    dmax = start
    while True:
        if dmax > dmax_cap:
            raise TruncationLimitExceeded(
                f"truncation mass still above {mass_budget:g} at dmax cap {dmax_cap}"
            )
        dist = stationary_distribution(JointChainSpec(rates, K, dmax))
        log.debug("dmax=%d truncation_mass=%.3g", dmax, dist.truncation_mass)
        if dist.truncation_mass < mass_budget:
            return dmax, dist
        dmax *= 2


def solve_oracle(
    rates: NodeRates, K: int, mass_budget: float = DEFAULT_MASS_BUDGET
) -> tuple[OracleSolution, JointStationaryDistribution]:
    _, dist = choose_truncation(rates, K, mass_budget)
    return oracle_marginals(dist, K), dist
