"""Parameter sweeps and the analytic / exact / simulated validation grid.

Every sweep returns a :class:`SweepTable`. Infeasible or unstable cells are
left blank and explained in a ``status`` column; no NaN or Inf is ever
written.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .analytics import NodeRates, analyze_node
from .errors import ModelError, Unstable
from .oracle import DEFAULT_MASS_BUDGET, choose_truncation, oracle_marginals
from .simulator import SimulationConfig, run_experiment
from .sizing import (
    Binding,
    binding_constraint,
    ceil_capacity,
    is_overflow_feasible,
    k_alpha,
    k_beta,
    overflow_lower_bound,
)

DEFAULT_GAMMAS = tuple(round(0.05 * i, 2) for i in range(1, 20))
DEFAULT_PROBS = (0.01, 0.02, 0.05, 0.1, 0.2, 0.3)
FIG_K_ALPHA_ALPHAS = (0.05, 0.02, 0.1)
FIG_K_BETA_GAMMA = 0.95
GAP_FLAG_THRESHOLD = 0.05
FLOAT_FMT = "{:.12g}"


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ValueError("refusing to write a non-finite cell")
        return FLOAT_FMT.format(float(value))
    return str(value)


def _jsonable(value):
    if isinstance(value, (np.floating, float)):
        return float(FLOAT_FMT.format(float(value)))
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@dataclass(frozen=True)
class Column:
    name: str
    unit: str = "1"


@dataclass
class SweepTable:
    name: str
    columns: list[Column]
    rows: list[list]
    provenance: dict[str, str] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        width = len(self.columns)
        for row in self.rows:
            if len(row) != width:
                raise ValueError(f"row has {len(row)} cells, expected {width}")

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> list:
        i = self.column_names.index(name)
        return [row[i] for row in self.rows]

    def records(self) -> list[dict]:
        names = self.column_names
        return [dict(zip(names, row)) for row in self.rows]

    def to_csv(self) -> str:
        from . import __version__

        buf = io.StringIO()
        buf.write(f"# table: {self.name}\n")
        buf.write(f"# generator: ehbattery {__version__}\n")
        for key, value in self.provenance.items():
            buf.write(f"# {key}: {value}\n")
        buf.write("# units: " + ",".join(f"{c.name}={c.unit}" for c in self.columns) + "\n")
        for note in self.notes:
            buf.write(f"# WARNING: {note}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.column_names)
        for row in self.rows:
            w.writerow([fmt(v) for v in row])
        return buf.getvalue()

    def to_json_text(self) -> str:
        from . import __version__

        doc = {
            "table": self.name,
            "generator": f"ehbattery {__version__}",
            "provenance": self.provenance,
            "units": {c.name: c.unit for c in self.columns},
            "notes": self.notes,
            "rows": [
                {k: _jsonable(v) for k, v in rec.items()} for rec in self.records()
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def read_csv(text: str) -> tuple[list[str], list[dict[str, str]]]:
    """Parse :meth:`SweepTable.to_csv` output; returns (header, rows)."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    return list(reader.fieldnames or []), list(reader)


def _grid_repr(values) -> str:
    return " ".join(fmt(v) for v in values)


def sweep_k_alpha(gamma_grid=DEFAULT_GAMMAS, alphas=FIG_K_ALPHA_ALPHAS) -> SweepTable:
    """Depletion-sized capacity against gamma, one curve per alpha."""
    rows = [[a, g, k_alpha(g, a)] for a in alphas for g in gamma_grid]
    return SweepTable(
        name="k_alpha",
        columns=[Column("alpha"), Column("gamma"), Column("k_alpha", "energy packets")],
        rows=rows,
        provenance={"gamma_grid": _grid_repr(gamma_grid), "alphas": _grid_repr(alphas)},
    )


def sweep_k_beta(
    alpha_grid=DEFAULT_PROBS, beta_grid=DEFAULT_PROBS, gamma: float = FIG_K_BETA_GAMMA
) -> SweepTable:
    """Overflow-sized capacity over (alpha, beta) at fixed gamma."""
    rows = []
    for a in alpha_grid:
        for b in beta_grid:
            if is_overflow_feasible(gamma, a, b):
                rows.append([gamma, a, b, k_beta(gamma, a, b), overflow_lower_bound(gamma, a), "ok"])
            else:
                rows.append([gamma, a, b, None, overflow_lower_bound(gamma, a), "infeasible"])
    return SweepTable(
        name="k_beta",
        columns=[
            Column("gamma"),
            Column("alpha"),
            Column("beta"),
            Column("k_beta", "energy packets"),
            Column("beta_lower_bound"),
            Column("status"),
        ],
        rows=rows,
        provenance={
            "gamma": fmt(gamma),
            "alpha_grid": _grid_repr(alpha_grid),
            "beta_grid": _grid_repr(beta_grid),
        },
    )


def compare_sizing(gamma: float, alpha: float, beta_grid) -> SweepTable:
    """Both closed forms side by side; they cross at ``beta = 1 - gamma``."""
    rows = []
    ka = k_alpha(gamma, alpha)
    for b in beta_grid:
        binding = binding_constraint(gamma, b)
        if is_overflow_feasible(gamma, alpha, b):
            kb = k_beta(gamma, alpha, b)
            larger = kb if binding is Binding.OVERFLOW else ka
            rows.append([b, ka, kb, binding.value, ceil_capacity(larger), "ok"])
        else:
            rows.append([b, ka, None, binding.value, None, "infeasible"])
    return SweepTable(
        name="compare_sizing",
        columns=[
            Column("beta"),
            Column("k_alpha", "energy packets"),
            Column("k_beta", "energy packets"),
            Column("binding"),
            Column("capacity", "energy packets"),
            Column("status"),
        ],
        rows=rows,
        provenance={"gamma": fmt(gamma), "alpha": fmt(alpha), "beta_grid": _grid_repr(beta_grid)},
    )


def _cell_seed(base_seed: int, cell: int) -> int:
    ss = np.random.SeedSequence(base_seed, spawn_key=(cell,))
    return int(ss.generate_state(1, np.uint64)[0])


VALIDATION_COLUMNS = [
    Column("gamma"),
    Column("K", "energy packets"),
    Column("lambda_D", "1/s"),
    Column("lambda_E", "1/s"),
    Column("lambda_C", "1/s"),
    Column("status"),
    Column("analytic_p_E0"),
    Column("analytic_p_EK"),
    Column("analytic_p_D0"),
    Column("oracle_p_E0"),
    Column("oracle_p_EK"),
    Column("oracle_p_D0"),
    Column("oracle_dmax", "data packets"),
    Column("oracle_truncation_mass"),
    Column("sim_seed"),
    Column("sim_p_E0"),
    Column("sim_p_E0_se"),
    Column("sim_p_EK"),
    Column("sim_p_EK_se"),
    Column("sim_p_D0"),
    Column("sim_p_D0_se"),
    Column("sim_blocked_fraction"),
    Column("sim_blocked_fraction_se"),
    Column("gap_p_E0"),
    Column("gap_p_EK"),
    Column("gap_p_D0"),
    Column("z_p_E0"),
    Column("z_p_EK"),
    Column("z_p_D0"),
    Column("gap_flag"),
]

_SIM_METRICS = (
    ("p_E0", "time_fraction_energy_empty"),
    ("p_EK", "time_fraction_energy_full"),
    ("p_D0", "time_fraction_data_empty"),
)


def validation_grid(
    gamma_grid,
    K_grid,
    lambda_C: float,
    sim_config_template: SimulationConfig | None = None,
    lambda_E: float | None = None,
    simulate: bool = True,
    mass_budget: float = DEFAULT_MASS_BUDGET,
    gap_threshold: float = GAP_FLAG_THRESHOLD,
) -> SweepTable:
    """Decoupled analytic values vs. the exact chain vs. simulation, per cell.

    ``lambda_E`` comes from the template's rates unless given; each cell sets
    ``lambda_D = gamma * lambda_E``. Gaps are ``analytic - oracle``; ``z``
    columns are ``(simulation - oracle) / standard error``. A cell whose
    depletion gap exceeds ``gap_threshold`` is flagged in ``gap_flag`` and in
    the table notes.
    """
    if sim_config_template is None:
        sim_config_template = SimulationConfig(NodeRates(0.0, lambda_E or 1.0, lambda_C), 1)
    if lambda_E is None:
        lambda_E = sim_config_template.rates.lambda_E

    rows, notes = [], []
    cell = 0
    for g in gamma_grid:
        for K in K_grid:
            rates = NodeRates(g * lambda_E, lambda_E, lambda_C)
            row = dict.fromkeys(c.name for c in VALIDATION_COLUMNS)
            row.update(gamma=g, K=K, lambda_D=rates.lambda_D, lambda_E=lambda_E, lambda_C=lambda_C)
            status = []
            analytic = None
            try:
                analytic = analyze_node(rates, K)
                row.update(
                    analytic_p_E0=analytic.p_E0,
                    analytic_p_EK=analytic.p_EK,
                    analytic_p_D0=analytic.p_D0,
                )
            except ModelError as exc:
                status.append(f"analytic:{type(exc).__name__}")

            try:
                dmax, dist = choose_truncation(rates, K, mass_budget)
            except Unstable:
                status.append("exact:Unstable")
                row["status"] = ";".join(status)
                rows.append([row[c.name] for c in VALIDATION_COLUMNS])
                cell += 1
                continue
            exact = oracle_marginals(dist, K)
            row.update(
                oracle_p_E0=exact.p_E0_exact,
                oracle_p_EK=exact.p_EK_exact,
                oracle_p_D0=exact.p_D0_exact,
                oracle_dmax=dmax,
                oracle_truncation_mass=dist.truncation_mass,
            )
            if analytic is not None:
                row.update(
                    gap_p_E0=analytic.p_E0 - exact.p_E0_exact,
                    gap_p_EK=analytic.p_EK - exact.p_EK_exact,
                    gap_p_D0=analytic.p_D0 - exact.p_D0_exact,
                )
                flagged = abs(row["gap_p_E0"]) > gap_threshold
                row["gap_flag"] = flagged
                if flagged:
                    notes.append(
                        f"gamma={fmt(g)} K={K}: analytic P_E0 {fmt(analytic.p_E0)} differs from "
                        f"exact {fmt(exact.p_E0_exact)} by more than {fmt(gap_threshold)}"
                    )

            if simulate:
                seed = _cell_seed(sim_config_template.base_seed, cell)
                cfg = replace(sim_config_template, rates=rates, capacity_K=K, base_seed=seed)
                report = run_experiment(cfg)
                row["sim_seed"] = seed
                for short, metric in _SIM_METRICS:
                    est = report[metric]
                    row[f"sim_{short}"] = est.mean
                    row[f"sim_{short}_se"] = est.std_error
                    if est.std_error:
                        row[f"z_{short}"] = (est.mean - getattr(exact, f"{short}_exact")) / est.std_error
                blk = report["ep_arrivals_blocked_fraction"]
                row["sim_blocked_fraction"] = blk.mean
                row["sim_blocked_fraction_se"] = blk.std_error

            row["status"] = ";".join(status) if status else "ok"
            rows.append([row[c.name] for c in VALIDATION_COLUMNS])
            cell += 1

    provenance = {
        "gamma_grid": _grid_repr(gamma_grid),
        "K_grid": _grid_repr(K_grid),
        "lambda_E": fmt(lambda_E),
        "lambda_C": fmt(lambda_C),
        "mass_budget": fmt(mass_budget),
        "gap_threshold": fmt(gap_threshold),
    }
    if simulate:
        t = sim_config_template
        provenance.update(
            horizon=fmt(t.horizon),
            warmup_fraction=fmt(t.warmup_fraction),
            replications=fmt(t.replications),
            base_seed=fmt(t.base_seed),
        )
    return SweepTable("validation_grid", list(VALIDATION_COLUMNS), rows, provenance, notes)


# --- minimal SVG line charts -------------------------------------------------


def svg_line_chart(
    series: dict[str, tuple[list[float], list[float]]],
    title: str,
    x_label: str,
    y_label: str,
    width: int = 640,
    height: int = 420,
) -> str:
    """Static SVG with one polyline per series. Output is deterministic."""
    palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
    left, right, top, bottom = 70, 150, 40, 55
    xs = [x for xv, _ in series.values() for x in xv]
    ys = [y for _, yv in series.values() for y in yv]
    if not xs:
        raise ValueError("nothing to plot")
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(0.0, min(ys)), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw, ph = width - left - right, height - top - bottom

    def px(x: float) -> str:
        return f"{left + (x - x0) / (x1 - x0) * pw:.2f}"

    def py(y: float) -> str:
        return f"{top + ph - (y - y0) / (y1 - y0) * ph:.2f}"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for i in range(6):
        xv = x0 + (x1 - x0) * i / 5
        yv = y0 + (y1 - y0) * i / 5
        out.append(
            f'<text x="{px(xv)}" y="{top + ph + 16}" text-anchor="middle">{xv:.3g}</text>'
        )
        out.append(f'<text x="{left - 6}" y="{py(yv)}" text-anchor="end">{yv:.3g}</text>')
    out.append(
        f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{x_label}</text>'
    )
    out.append(
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">{y_label}</text>'
    )
    for i, (name, (xv, yv)) in enumerate(series.items()):
        color = palette[i % len(palette)]
        pts = " ".join(f"{px(x)},{py(y)}" for x, y in zip(xv, yv))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 18 * i
        out.append(
            f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(f'<text x="{left + pw + 38}" y="{ly + 4}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def table_svg(table: SweepTable) -> str:
    """Chart for one of the three sizing tables."""
    recs = table.records()
    series: dict[str, tuple[list[float], list[float]]] = {}
    if table.name == "k_alpha":
        for r in recs:
            xs, ys = series.setdefault(f"alpha={fmt(r['alpha'])}", ([], []))
            xs.append(r["gamma"])
            ys.append(r["k_alpha"])
        return svg_line_chart(series, "K_alpha vs gamma", "gamma", "K_alpha")
    if table.name == "k_beta":
        for r in recs:
            if r["status"] != "ok":
                continue
            xs, ys = series.setdefault(f"alpha={fmt(r['alpha'])}", ([], []))
            xs.append(r["beta"])
            ys.append(r["k_beta"])
        gamma = table.provenance.get("gamma", "")
        return svg_line_chart(series, f"K_beta vs beta (gamma={gamma})", "beta", "K_beta")
    if table.name == "compare_sizing":
        ok = [r for r in recs if r["status"] == "ok"]
        series["K_alpha"] = ([r["beta"] for r in ok], [r["k_alpha"] for r in ok])
        series["K_beta"] = ([r["beta"] for r in ok], [r["k_beta"] for r in ok])
        return svg_line_chart(series, "K_alpha and K_beta vs beta", "beta", "capacity")
    raise ValueError(f"no chart defined for table {table.name!r}")
