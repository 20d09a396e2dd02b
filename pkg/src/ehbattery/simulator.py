"""Monte-Carlo simulation of one node fed by three Poisson streams.

Data packets (DP), energy packets (EP) and connections (C) arrive
independently. An EP is stored unless the battery is full; a DP always
joins the unbounded data buffer; a connection moves one DP and burns one EP
if both are present and is otherwise wasted. The run starts empty at
``(d, e) = (0, 0)``; statistics are time averages over
``[warmup_fraction * horizon, horizon]``.

Each stream's arrival epochs are pre-generated in bulk, then a compiled
kernel merges them by always advancing the smallest of the three pending
timestamps.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
from scipy import stats

from .analytics import NodeRates, _check_capacity

RNG_ALGORITHM = "numpy Philox4x64-10, SeedSequence(base_seed, spawn_key=(replication, stream))"
CONFIDENCE = 0.99
MIN_EVENTS = 10_000

STREAM_DP, STREAM_EP, STREAM_C = 0, 1, 2

METRICS = (
    "time_fraction_energy_empty",
    "time_fraction_energy_full",
    "time_fraction_data_empty",
    "ep_arrivals_blocked_fraction",
    "transfers_completed",
    "mean_data_queue_length",
)


@dataclass(frozen=True)
class SimulationConfig:
    rates: NodeRates
    capacity_K: int
    horizon: float = 1e5
    warmup_fraction: float = 0.1
    replications: int = 30
    base_seed: int = 0

    def __post_init__(self) -> None:
        _check_capacity(self.capacity_K)
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError("horizon must be positive")
        if not (0.0 <= self.warmup_fraction <= 0.5):
            raise ValueError("warmup_fraction must lie in [0, 0.5]")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not (0 <= self.base_seed < 2**64):
            raise ValueError("base_seed must be a 64-bit unsigned integer")

    def expected_events(self) -> float:
        r = self.rates
        positive = [x for x in (r.lambda_D, r.lambda_E, r.lambda_C) if x > 0]
        if not positive:
            return 0.0
        return self.horizon * (1.0 - self.warmup_fraction) * min(positive)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rng"] = RNG_ALGORITHM
        return d


@dataclass(frozen=True)
class ReplicationStats:
    time_fraction_energy_empty: float
    time_fraction_energy_full: float
    time_fraction_data_empty: float
    ep_arrivals_blocked_fraction: float
    transfers_completed: int
    mean_data_queue_length: float
    # whole-run bookkeeping, including the warm-up period
    ep_arrivals: int = 0
    ep_blocked: int = 0
    ep_consumed: int = 0
    dp_arrivals: int = 0
    dp_departed: int = 0
    final_energy: int = 0
    final_data: int = 0


@dataclass(frozen=True)
class MetricEstimate:
    mean: float
    std_error: float | None
    ci_low: float | None
    ci_high: float | None

    @property
    def half_width(self) -> float | None:
        if self.ci_high is None:
            return None
        return 0.5 * (self.ci_high - self.ci_low)


@dataclass(frozen=True)
class SimulationReport:
    config: SimulationConfig
    estimates: dict[str, MetricEstimate]
    seeds: list[tuple[int, int]]
    replications: list[ReplicationStats] = field(repr=False)
    warnings: list[str] = field(default_factory=list)
    confidence: float = CONFIDENCE

    def __getitem__(self, metric: str) -> MetricEstimate:
        return self.estimates[metric]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "confidence": self.confidence,
            "seeds": [list(s) for s in self.seeds],
            "warnings": list(self.warnings),
            "estimates": {
                k: {
                    "mean": v.mean,
                    "std_error": v.std_error,
                    "ci_low": v.ci_low,
                    "ci_high": v.ci_high,
                }
                for k, v in self.estimates.items()
            },
        }


def _event_kernel(t_dp, t_ep, t_c, K, warmup, horizon):
    """Advance the node through the merged arrival epochs.

    Returns ``(time_in_state, counts)`` where ``time_in_state`` holds the
    post-warm-up time with energy empty, energy full, data empty and the
    integral of the data level, and ``counts`` holds post-warm-up EP
    arrivals, post-warm-up blocked EPs, post-warm-up transfers, then the
    whole-run totals (EP arrivals, EP blocked, EP consumed, DP arrivals,
    DP departed, final energy, final data).
    """
    n_dp, n_ep, n_c = t_dp.shape[0], t_ep.shape[0], t_c.shape[0]
    i_dp = 0
    i_ep = 0
    i_c = 0
    d = 0
    e = 0
    t_prev = 0.0
    time_e0 = 0.0
    time_ek = 0.0
    time_d0 = 0.0
    area_d = 0.0
    w_ep = 0
    w_blocked = 0
    w_transfers = 0
    ep_arr = 0
    ep_blk = 0
    ep_used = 0
    dp_arr = 0
    dp_out = 0
    inf = np.inf
    while True:
        a = t_dp[i_dp] if i_dp < n_dp else inf
        b = t_ep[i_ep] if i_ep < n_ep else inf
        c = t_c[i_c] if i_c < n_c else inf
        t = a
        kind = 0
        if b < t:
            t = b
            kind = 1
        if c < t:
            t = c
            kind = 2
        if t > horizon:
            t = horizon
            kind = -1

        start = t_prev if t_prev > warmup else warmup
        if t > start:
            dt = t - start
            if e == 0:
                time_e0 += dt
            if e == K:
                time_ek += dt
            if d == 0:
                time_d0 += dt
            area_d += d * dt
        if kind < 0:
            break
        t_prev = t
        counted = t >= warmup

        if kind == 0:
            i_dp += 1
            d += 1
            dp_arr += 1
        elif kind == 1:
            i_ep += 1
            ep_arr += 1
            if counted:
                w_ep += 1
            if e < K:
                e += 1
            else:
                ep_blk += 1
                if counted:
                    w_blocked += 1
        else:
            i_c += 1
            if d >= 1 and e >= 1:
                d -= 1
                e -= 1
                ep_used += 1
                dp_out += 1
                if counted:
                    w_transfers += 1

    times = np.array([time_e0, time_ek, time_d0, area_d])
    counts = np.array(
        [w_ep, w_blocked, w_transfers, ep_arr, ep_blk, ep_used, dp_arr, dp_out, e, d],
        dtype=np.int64,
    )
    return times, counts


_compiled_kernel = numba.njit(cache=True)(_event_kernel)


def _arrival_epochs(rng: np.random.Generator, rate: float, horizon: float) -> np.ndarray:
    """Sorted arrival epochs of a rate-``rate`` Poisson process on ``[0, horizon]``."""
    if rate <= 0:
        return np.empty(0)
    mean_n = rate * horizon
    chunk = int(mean_n + 6.0 * math.sqrt(mean_n) + 16)
    parts = []
    last = 0.0
    while last <= horizon:
        gaps = rng.exponential(1.0 / rate, size=chunk)
        epochs = last + np.cumsum(gaps)
        parts.append(epochs)
        last = float(epochs[-1])
    epochs = np.concatenate(parts)
    return epochs[: np.searchsorted(epochs, horizon, side="right")]


def _stream_rng(base_seed: int, replication: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(base_seed, spawn_key=(replication, stream))
    return np.random.Generator(np.random.Philox(ss))


def run_replication(
    config: SimulationConfig, replication_index: int, compiled: bool = True
) -> ReplicationStats:
    r = config.rates
    H = config.horizon
    streams = [
        _arrival_epochs(_stream_rng(config.base_seed, replication_index, s), rate, H)
        for s, rate in ((STREAM_DP, r.lambda_D), (STREAM_EP, r.lambda_E), (STREAM_C, r.lambda_C))
    ]
    kernel = _compiled_kernel if compiled else _event_kernel
    warmup = config.warmup_fraction * H
    times, counts = kernel(*streams, config.capacity_K, warmup, H)
    window = H - warmup
    w_ep, w_blocked, w_transfers = (int(x) for x in counts[:3])
    ep_arr, ep_blk, ep_used, dp_arr, dp_out, e_end, d_end = (int(x) for x in counts[3:])
    return ReplicationStats(
        time_fraction_energy_empty=times[0] / window,
        time_fraction_energy_full=times[1] / window,
        time_fraction_data_empty=times[2] / window,
        ep_arrivals_blocked_fraction=(w_blocked / w_ep) if w_ep else 0.0,
        transfers_completed=w_transfers,
        mean_data_queue_length=times[3] / window,
        ep_arrivals=ep_arr,
        ep_blocked=ep_blk,
        ep_consumed=ep_used,
        dp_arrivals=dp_arr,
        dp_departed=dp_out,
        final_energy=e_end,
        final_data=d_end,
    )


def summarize(values: np.ndarray, confidence: float = CONFIDENCE) -> MetricEstimate:
    """Mean with a t-based confidence interval across replications."""
    n = len(values)
    mean = float(np.mean(values))
    if n < 2:
        return MetricEstimate(mean, None, None, None)
    se = float(np.std(values, ddof=1) / math.sqrt(n))
    q = float(stats.t.ppf(0.5 + confidence / 2.0, n - 1))
    return MetricEstimate(mean, se, mean - q * se, mean + q * se)


def run_experiment(config: SimulationConfig) -> SimulationReport:
    notes = []
    if config.expected_events() < MIN_EVENTS:
        msg = (
            f"expected post-warm-up events of the slowest stream is "
            f"{config.expected_events():.3g} < {MIN_EVENTS}; estimates may be noisy"
        )
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    if config.replications == 1:
        msg = "replications=1: confidence intervals undefined, point estimates only"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)

    # ordered by replication index, so any parallel map gives the same result
    reps = [run_replication(config, i) for i in range(config.replications)]
    estimates = {
        m: summarize(np.array([getattr(rep, m) for rep in reps], dtype=float)) for m in METRICS
    }
    return SimulationReport(
        config=config,
        estimates=estimates,
        seeds=[(config.base_seed, i) for i in range(config.replications)],
        replications=reps,
        warnings=notes,
    )


def intervals_overlap(a: MetricEstimate, b: MetricEstimate) -> bool:
    return a.ci_low <= b.ci_high and b.ci_low <= a.ci_high


def pasta_check(report: SimulationReport) -> bool:
    """Blocked-EP fraction and time-at-capacity agree (overlapping CIs)."""
    return intervals_overlap(
        report["ep_arrivals_blocked_fraction"], report["time_fraction_energy_full"]
    )
