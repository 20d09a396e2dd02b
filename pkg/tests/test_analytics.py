import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from ehbattery import (
    GammaNotLessThanOne,
    NodeRates,
    NonPositiveRate,
    Unstable,
    analyze_node,
    overflow_probability,
    solve_depletion_probability,
    validate_rates,
)
from ehbattery.analytics import depletion_residual, mm1k_empty, solve_zeta

GAMMAS = [round(0.05 * i, 2) for i in range(2, 20)]  # 0.10 .. 0.95
KS = range(1, 101)

# Frozen from tests/oracles/mp_oracle.py (60-digit bisection on the
# unreduced fixed-point equation).
MP_DEPLETION = [
    (0.9, 13, 0.048532002767258736127),
    (0.5, 3, 0.080356622392919433724),
    (0.3, 7, 0.00015325433266384361043),
    (0.95, 100, 0.00030520195326516264076),
    (0.1, 50, 9.0000000000274357311e-51),
    (0.99, 2, 0.89537570577414357595),
    (0.7, 5, 0.074092271387832737189),
]


@pytest.mark.parametrize("gamma,K,expected", MP_DEPLETION)
def test_depletion_matches_high_precision_oracle(gamma, K, expected):
    assert solve_depletion_probability(gamma, K) == pytest.approx(expected, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("gamma", [0.01, 0.2, 0.5, 0.77, 0.999])
def test_capacity_one_reduces_to_gamma(gamma):
    assert solve_depletion_probability(gamma, 1) == pytest.approx(gamma, abs=1e-10)


@pytest.mark.parametrize("K", [1, 2, 5, 13, 99])
def test_unit_utilization_branch(K):
    gamma = K / (K + 1)
    assert solve_zeta(gamma, K) == pytest.approx(1.0, abs=1e-9)
    assert solve_depletion_probability(gamma, K) == pytest.approx(1 / (K + 1), abs=1e-9)


def test_fixed_point_residual_on_grid():
    worst = max(abs(depletion_residual(g, solve_zeta(g, K), K)) for g in GAMMAS for K in KS)
    assert worst < 1e-10


def test_depletion_monotone_in_capacity_and_gamma():
    table = np.array([[solve_depletion_probability(g, K) for K in KS] for g in GAMMAS])
    assert np.all(np.diff(table, axis=1) < 0), "must fall as K grows"
    assert np.all(np.diff(table, axis=0) > 0), "must rise with gamma"


@settings(max_examples=200, deadline=None)
@given(
    gamma=st.floats(min_value=1e-3, max_value=0.999),
    K=st.integers(min_value=1, max_value=400),
)
def test_depletion_in_unit_interval(gamma, K):
    # P_E0 ~ gamma**K; keep it above the double-precision underflow
    assume(K * math.log10(1 / gamma) < 290)
    p = solve_depletion_probability(gamma, K)
    assert 0.0 < p < 1.0
    assert abs(depletion_residual(gamma, solve_zeta(gamma, K), K)) < 1e-10


def test_example_capacity_meets_depletion_target():
    assert solve_depletion_probability(0.9, 13) < 0.05


class TestOverflow:
    def test_unit_utilization(self):
        assert overflow_probability(1.0, 9) == pytest.approx(0.1, abs=1e-15)

    def test_closed_value(self):
        # (1 - 1/2)/(1 - 1/16) and rho**K * P0 = 8 * (1-2)/(1-16)
        p = overflow_probability(2.0, 3)
        assert p == pytest.approx(8 / 15, rel=1e-14)
        assert p == pytest.approx(2.0**3 * mm1k_empty(2.0, 3), rel=1e-14)

    @pytest.mark.parametrize("K", [1, 4, 30])
    def test_continuity_across_switch(self, K):
        for z in (1 - 1e-9, 1 + 1e-9, 1 - 2e-9, 1 + 2e-9):
            assert abs(overflow_probability(z, K) - 1 / (K + 1)) < 1e-6

    def test_increasing_towards_one(self):
        zs = np.geomspace(0.05, 1e4, 200)
        ps = [overflow_probability(z, 5) for z in zs]
        assert all(b > a for a, b in zip(ps, ps[1:]))
        assert ps[-1] == pytest.approx(1 - 1 / zs[-1], rel=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            overflow_probability(0.0, 3)


class TestValidateRates:
    def test_example_is_valid(self, example_rates):
        assert validate_rates(example_rates, 13) is example_rates

    def test_gamma_above_one(self):
        with pytest.raises(GammaNotLessThanOne):
            validate_rates(NodeRates(1.0, 0.5, 2.0), 5)

    def test_unstable(self):
        # P_E0(0.99, 2) = 0.8954 from the mp oracle, so lambda_C(1-P_E0) = 0.105 < 0.99
        with pytest.raises(Unstable):
            validate_rates(NodeRates(0.99, 1.0, 1.0), 2)

    def test_zero_rate(self):
        with pytest.raises(NonPositiveRate):
            validate_rates(NodeRates(0.0, 1.0, 1.0), 2)

    @pytest.mark.parametrize("bad", [-1.0, math.inf, math.nan])
    def test_construction_rejects(self, bad):
        with pytest.raises(NonPositiveRate):
            NodeRates(bad, 1.0, 1.0)

    def test_ratios(self, example_rates):
        assert example_rates.gamma == pytest.approx(0.9)
        assert example_rates.gamma_D == pytest.approx(0.8)
        assert example_rates.gamma_E == pytest.approx(0.8 / 0.9)


class TestAnalyzeNode:
    def test_example(self, example_rates):
        sol = analyze_node(example_rates, 13)
        assert sol.p_E0 < 0.05
        assert sol.p_EK < 0.3
        assert sol.rho_E == pytest.approx((1 - sol.p_E0) / 0.9, abs=1e-10)
        assert sol.p_D0 == 1 - example_rates.lambda_D / (example_rates.lambda_C * (1 - sol.p_E0))
        assert sol.p_D0 == 1 - sol.rho_D

    @pytest.mark.parametrize("gamma", [0.3, 0.6, 0.9])
    @pytest.mark.parametrize("K", [1, 3, 13, 40])
    def test_invariants(self, gamma, K):
        rates = NodeRates(gamma * 1.0, 1.0, 10.0)
        sol = analyze_node(rates, K)
        assert sol.rho_E == pytest.approx(sol.zeta, abs=1e-10)
        assert 0 < sol.p_E0 < 1 and 0 < sol.p_EK < 1
        if K >= 2:
            assert sol.p_E0 + sol.p_EK <= 1
        # textbook M/M/1/K with the solved effective service rate
        mu = rates.lambda_C * (1 - sol.p_D0)
        assert mm1k_empty(rates.lambda_E / mu, K) == pytest.approx(sol.p_E0, abs=1e-10)

    @pytest.mark.parametrize("gamma", [0.2, 0.5, 0.9])
    def test_overflow_equals_one_minus_gamma(self, gamma):
        # accepted EP rate must equal the transfer rate lambda_D
        sol = analyze_node(NodeRates(gamma, 1.0, 2.0), 7)
        assert sol.p_EK == pytest.approx(1 - gamma, abs=1e-10)

    def test_rejects_fractional_capacity(self, example_rates):
        with pytest.raises(ValueError):
            analyze_node(example_rates, 2.5)
