import math

import pytest

from ehbattery.simulator import SimulationConfig
from ehbattery import NodeRates
from ehbattery.sweep import (
    DEFAULT_GAMMAS,
    DEFAULT_PROBS,
    VALIDATION_COLUMNS,
    SweepTable,
    Column,
    compare_sizing,
    fmt,
    read_csv,
    svg_line_chart,
    sweep_k_alpha,
    sweep_k_beta,
    table_svg,
    validation_grid,
)


def by(records, key):
    out = {}
    for r in records:
        out.setdefault(r[key], []).append(r)
    return out


class TestKAlphaTable:
    def test_example_cross_point(self):
        t = sweep_k_alpha()
        row = [r for r in t.records() if r["alpha"] == 0.05 and r["gamma"] == 0.9][0]
        assert row["k_alpha"] == pytest.approx(12.82, abs=0.01)

    def test_increasing_in_gamma(self):
        for alpha, rows in by(sweep_k_alpha().records(), "alpha").items():
            ks = [r["k_alpha"] for r in sorted(rows, key=lambda r: r["gamma"])]
            assert all(b > a for a, b in zip(ks, ks[1:])), alpha

    def test_ordering_across_alpha(self):
        t = sweep_k_alpha(alphas=(0.02, 0.05, 0.1))
        for g, rows in by(t.records(), "gamma").items():
            k = {r["alpha"]: r["k_alpha"] for r in rows}
            assert k[0.02] > k[0.05] > k[0.1], g

    def test_special_case_points(self):
        for a in (0.05, 0.1, 0.2):
            t = sweep_k_alpha(gamma_grid=[1 - a], alphas=[a])
            assert t.rows[0][2] == pytest.approx(1 / a - 1, abs=1e-9)


class TestKBetaTable:
    def test_decreasing_along_beta(self):
        for alpha, rows in by(sweep_k_beta().records(), "alpha").items():
            ks = [r["k_beta"] for r in sorted(rows, key=lambda r: r["beta"]) if r["status"] == "ok"]
            assert ks and all(b < a for a, b in zip(ks, ks[1:])), alpha

    def test_z_equal_one(self):
        t = sweep_k_beta(alpha_grid=[0.05], gamma=0.95)
        for r in t.records():
            assert r["k_beta"] == pytest.approx(1 / r["beta"] - 1, abs=1e-9)

    def test_infeasible_marker(self):
        t = sweep_k_beta()
        bad = [r for r in t.records() if r["status"] == "infeasible"]
        assert bad, "alpha=0.01, beta=0.01 at gamma=0.95 should be infeasible"
        for r in bad:
            assert r["k_beta"] is None
            assert (1 - r["alpha"]) * (1 - r["beta"]) >= r["gamma"] - 1e-12
        rows = read_csv(t.to_csv())[1]
        assert all(r["k_beta"] == "" for r in rows if r["status"] == "infeasible")
        assert "nan" not in t.to_csv().lower()


class TestCompare:
    def test_sign_rule_and_crossing(self):
        gamma = 0.9
        t = compare_sizing(gamma, 0.05, [round(0.01 * i, 2) for i in range(1, 31)])
        feasible = [r for r in t.records() if r["status"] == "ok"]
        assert len(feasible) == 25  # beta <= 1 - 0.9/0.95 is unattainable
        for r in feasible:
            s = r["beta"] + gamma - 1
            if abs(s) < 1e-12:
                assert r["binding"] == "Tie"
                assert abs(r["k_alpha"] - r["k_beta"]) < 1e-9
            elif s < 0:
                assert r["k_alpha"] < r["k_beta"] and r["binding"] == "Overflow"
            else:
                assert r["k_alpha"] > r["k_beta"] and r["binding"] == "Depletion"
            assert r["capacity"] == math.ceil(max(r["k_alpha"], r["k_beta"]) - 1e-9)

    def test_infeasible_rows_have_no_capacity(self):
        t = compare_sizing(0.5, 0.3, [0.01, 0.1, 0.3])
        statuses = t.column("status")
        assert statuses[0] == "infeasible"
        assert t.records()[0]["capacity"] is None


def test_byte_identical_reruns():
    for make in (
        lambda: sweep_k_alpha(),
        lambda: sweep_k_beta(),
        lambda: compare_sizing(0.9, 0.05, DEFAULT_PROBS),
    ):
        a, b = make(), make()
        assert a.to_csv() == b.to_csv()
        assert a.to_json_text() == b.to_json_text()
        assert table_svg(a) == table_svg(b)


def test_csv_header_and_provenance():
    text = sweep_k_alpha(DEFAULT_GAMMAS[:3], (0.05,)).to_csv()
    lines = text.splitlines()
    assert lines[0] == "# table: k_alpha"
    assert any(ln.startswith("# units:") for ln in lines)
    header, rows = read_csv(text)
    assert header == ["alpha", "gamma", "k_alpha"]
    assert rows[0]["k_alpha"] == fmt(sweep_k_alpha([0.05], [0.05]).rows[0][2])


def test_fmt():
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(None) == ""
    assert fmt(True) in ("True", "true", "1")
    with pytest.raises(ValueError):
        fmt(float("nan"))


def test_table_rejects_ragged_rows():
    with pytest.raises(ValueError):
        SweepTable("x", [Column("a"), Column("b")], [[1]])


def test_svg_is_wellformed():
    import xml.etree.ElementTree as ET

    svg = svg_line_chart({"a": [(0.1, 1.0), (0.2, 2.0)]}, "t", "x", "y")
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    ET.fromstring(table_svg(sweep_k_beta()))


class TestValidationGrid:
    def test_analytic_and_oracle_only(self):
        t = validation_grid([0.5, 0.9], [3, 13], lambda_C=2.0, lambda_E=1.0, simulate=False)
        assert t.column_names == [c.name for c in VALIDATION_COLUMNS]
        assert len(t.rows) == 4
        for r in t.records():
            assert r["status"] == "ok"
            for k in ("analytic_p_E0", "oracle_p_E0", "oracle_p_EK", "oracle_p_D0"):
                assert 0 < r[k] < 1
            assert r["gap_p_E0"] == pytest.approx(r["analytic_p_E0"] - r["oracle_p_E0"])
            assert r["sim_p_E0"] is None

    def test_unstable_cells_marked(self):
        # lambda_C barely above lambda_D: the exact chain cannot drain the data queue
        t = validation_grid([0.9], [1, 13], lambda_C=1.0, lambda_E=1.0, simulate=False)
        statuses = t.column("status")
        assert all("Unstable" in s for s in statuses[:1])
        assert any(s != "ok" for s in statuses)
        assert "nan" not in t.to_csv().lower()

    def test_flagging(self):
        t = validation_grid([0.9], [13], lambda_C=0.9, lambda_E=0.8, simulate=False, gap_threshold=1e-6)
        assert t.records()[0]["gap_flag"] is True
        assert t.notes and "# WARNING:" in t.to_csv()

    def test_with_simulation_is_deterministic(self):
        tmpl = SimulationConfig(NodeRates(0.0, 1.0, 2.0), 1, horizon=3e4, replications=5, base_seed=42)
        a = validation_grid([0.5], [3, 5], 2.0, tmpl)
        b = validation_grid([0.5], [3, 5], 2.0, tmpl)
        assert a.to_csv() == b.to_csv()
        seeds = a.column("sim_seed")
        assert len(set(seeds)) == 2
        for r in a.records():
            for m in ("p_E0", "p_EK", "p_D0"):
                assert r[f"sim_{m}_se"] > 0
                assert abs(r[f"z_{m}"]) < 5
