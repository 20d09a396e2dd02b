import numpy as np
import pytest

from ehbattery import NodeRates
from ehbattery.oracle import solve_oracle
from ehbattery.simulator import (
    RNG_ALGORITHM,
    SimulationConfig,
    _arrival_epochs,
    pasta_check,
    run_experiment,
    run_replication,
    summarize,
)


def test_no_data_fills_battery():
    cfg = SimulationConfig(NodeRates(0.0, 1.0, 1.0), 5, horizon=2e4, replications=1)
    s = run_replication(cfg, 0)
    assert s.time_fraction_energy_full == pytest.approx(1.0)
    assert s.transfers_completed == 0
    assert s.time_fraction_data_empty == 1.0


def test_no_energy_means_no_transfers():
    cfg = SimulationConfig(NodeRates(0.5, 0.0, 1.0), 5, horizon=2e4, replications=1)
    s = run_replication(cfg, 0)
    assert s.time_fraction_energy_empty == 1.0
    assert s.transfers_completed == 0
    assert s.ep_arrivals == 0


def test_conservation(example_rates):
    s = run_replication(SimulationConfig(example_rates, 13, horizon=5e4), 3)
    assert s.ep_consumed == s.dp_departed
    assert s.ep_arrivals - s.ep_blocked - s.ep_consumed == s.final_energy
    assert s.dp_arrivals - s.dp_departed == s.final_data
    for f in (
        s.time_fraction_energy_empty,
        s.time_fraction_energy_full,
        s.time_fraction_data_empty,
        s.ep_arrivals_blocked_fraction,
    ):
        assert 0 <= f <= 1


def test_compiled_kernel_matches_python(example_rates):
    cfg = SimulationConfig(example_rates, 13, horizon=3e3)
    assert run_replication(cfg, 1) == run_replication(cfg, 1, compiled=False)


def test_determinism(example_rates):
    cfg = SimulationConfig(example_rates, 13, horizon=2e4, replications=4, base_seed=99)
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert a.to_dict() == b.to_dict()
    other = run_experiment(SimulationConfig(example_rates, 13, horizon=2e4, replications=4, base_seed=7))
    assert other.to_dict() != a.to_dict()
    assert a.to_dict()["config"]["rng"] == RNG_ALGORITHM


def test_replications_are_distinct(example_rates):
    cfg = SimulationConfig(example_rates, 13, horizon=1e4)
    assert run_replication(cfg, 0) != run_replication(cfg, 1)


def test_single_replication_warns(example_rates):
    cfg = SimulationConfig(example_rates, 13, horizon=2e4, replications=1)
    with pytest.warns(RuntimeWarning, match="replications=1"):
        rep = run_experiment(cfg)
    assert rep["time_fraction_energy_empty"].ci_low is None
    assert rep.warnings


def test_short_horizon_warns(example_rates):
    with pytest.warns(RuntimeWarning, match="noisy"):
        run_experiment(SimulationConfig(example_rates, 3, horizon=100, replications=2))


def test_poisson_stream_counts():
    rng = np.random.Generator(np.random.Philox(5))
    counts = [len(_arrival_epochs(rng, 2.0, 500.0)) for _ in range(400)]
    assert np.mean(counts) == pytest.approx(1000, rel=0.01)
    assert np.var(counts) == pytest.approx(1000, rel=0.2)
    ep = _arrival_epochs(rng, 2.0, 500.0)
    assert np.all(np.diff(ep) > 0) and ep[-1] <= 500.0


def test_summarize_t_interval():
    est = summarize(np.array([1.0, 2.0, 3.0, 4.0]))
    assert est.mean == 2.5
    assert est.std_error == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    # t_{0.995, 3} = 5.840909
    assert est.half_width == pytest.approx(5.840909309 * est.std_error, rel=1e-8)


def test_example_agrees_with_oracle(example_rates):
    exact, _ = solve_oracle(example_rates, 13)
    rep = run_experiment(SimulationConfig(example_rates, 13, horizon=1e5, replications=30, base_seed=2024))
    for metric, ref in (
        ("time_fraction_energy_empty", exact.p_E0_exact),
        ("time_fraction_energy_full", exact.p_EK_exact),
        ("time_fraction_data_empty", exact.p_D0_exact),
    ):
        est = rep[metric]
        assert abs(est.mean - ref) <= 3 * est.std_error, metric
    assert pasta_check(rep)
    assert rep["time_fraction_energy_empty"].half_width < 0.005
    assert rep["transfers_completed"].mean > 0


def test_config_validation(example_rates):
    with pytest.raises(ValueError):
        SimulationConfig(example_rates, 3, warmup_fraction=0.6)
    with pytest.raises(ValueError):
        SimulationConfig(example_rates, 3, replications=0)
    with pytest.raises(ValueError):
        SimulationConfig(example_rates, 0)
