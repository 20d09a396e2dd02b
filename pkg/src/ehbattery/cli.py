"""Command-line front end.

Exit codes: 0 success, 1 domain or solver error, 2 usage error.

Relative ``--output`` paths are placed under ``$EHBATTERY_OUTPUT_DIR`` when
that variable is set. All model parameters are explicit flags.

CSV schemas (one header row, '#' comment lines carry provenance):

  size       gamma,alpha,beta,k_alpha,k_beta,binding,capacity,
             depletion_at_capacity,overflow_at_capacity[,physical_capacity,unit]
  analyze    lambda_D,lambda_E,lambda_C,gamma,capacity_K,p_D0,p_E0,p_EK,rho_D,rho_E,zeta
  oracle     lambda_D,lambda_E,lambda_C,capacity_K,dmax,truncation_mass,residual_norm,
             p_E0_exact,p_EK_exact,p_D0_exact,mean_data_queue_length
  simulate   metric,mean,std_error,ci_low,ci_high (99% t-intervals over replications)
  sweep      k-alpha:  alpha,gamma,k_alpha
             k-beta:   gamma,alpha,beta,k_beta,beta_lower_bound,status
             compare:  beta,k_alpha,k_beta,binding,capacity,status
  validate   see ehbattery.sweep.VALIDATION_COLUMNS
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .analytics import NodeRates, analyze_node
from .errors import ModelError
from .oracle import DEFAULT_MASS_BUDGET, choose_truncation, oracle_marginals
from .simulator import RNG_ALGORITHM, SimulationConfig, pasta_check, run_experiment
from .sizing import DesignTargets, size_battery, to_physical_capacity
from .sweep import (
    DEFAULT_GAMMAS,
    DEFAULT_PROBS,
    FIG_K_ALPHA_ALPHAS,
    FIG_K_BETA_GAMMA,
    Column,
    SweepTable,
    compare_sizing,
    sweep_k_alpha,
    sweep_k_beta,
    table_svg,
    validation_grid,
)

OUTPUT_DIR_ENV = "EHBATTERY_OUTPUT_DIR"


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0 or v == float("inf"):
        raise argparse.ArgumentTypeError(f"must be positive and finite: {text}")
    return v


def _nonnegative(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v >= 0 or v == float("inf"):
        raise argparse.ArgumentTypeError(f"must be >= 0 and finite: {text}")
    return v


def _unit_open(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1): {text}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text}")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _list_of(kind):
    def parse(text: str) -> list:
        return [kind(x) for x in text.split(",") if x.strip()]

    return parse


# --- rendering ----------------------------------------------------------------


def _record_table(name: str, record: dict, provenance: dict | None = None) -> SweepTable:
    cols = [Column(k) for k in record]
    return SweepTable(name, cols, [list(record.values())], provenance or {})


def _render(table: SweepTable, fmt_name: str) -> str:
    if fmt_name == "csv":
        return table.to_csv()
    if fmt_name == "json-text":
        return table.to_json_text()
    from .sweep import fmt

    lines = []
    if len(table.rows) == 1:
        width = max(len(n) for n in table.column_names)
        for k, v in table.records()[0].items():
            lines.append(f"{k:<{width}}  {fmt(v) if v is not None else '-'}")
    else:
        lines.append("  ".join(table.column_names))
        for row in table.rows:
            lines.append("  ".join(fmt(v) if v is not None else "-" for v in row))
    for note in table.notes:
        lines.append(f"WARNING: {note}")
    return "\n".join(lines) + "\n"


def _resolve_output(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def _emit(text: str, output: str | None) -> None:
    target = _resolve_output(output)
    if target is None:
        sys.stdout.write(text)
    else:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")


def _rates(args) -> NodeRates:
    return NodeRates(args.lambda_d, args.lambda_e, args.lambda_c)


# --- subcommands --------------------------------------------------------------


def cmd_size(args) -> int:
    if args.gamma is not None:
        if args.lambda_d is not None or args.lambda_e is not None:
            args.parser.error("give either --gamma or --lambda-d/--lambda-e, not both")
        gamma = args.gamma
    elif args.lambda_d is not None and args.lambda_e is not None:
        gamma = args.lambda_d / args.lambda_e
    else:
        args.parser.error("one of --gamma or both --lambda-d and --lambda-e is required")
    if not 0 < gamma < 1:
        args.parser.error(f"gamma must lie in (0, 1), got {gamma:.12g}")

    result = size_battery(gamma, DesignTargets(args.alpha, args.beta))
    record = result.as_dict()
    if args.ep_size is not None:
        phys = to_physical_capacity(result.capacity, args.ep_size, args.unit)
        record["physical_capacity"] = phys.value
        record["unit"] = phys.unit
    _emit(_render(_record_table("size", record), args.format), args.output)
    return 0


def cmd_analyze(args) -> int:
    rates = _rates(args)
    sol = analyze_node(rates, args.capacity)
    record = {
        "lambda_D": rates.lambda_D,
        "lambda_E": rates.lambda_E,
        "lambda_C": rates.lambda_C,
        "gamma": rates.gamma,
        **sol.as_dict(),
    }
    _emit(_render(_record_table("analyze", record), args.format), args.output)
    return 0


def cmd_oracle(args) -> int:
    rates = _rates(args)
    dmax, dist = choose_truncation(rates, args.capacity, args.dmax_budget, args.dmax_cap)
    sol = oracle_marginals(dist, args.capacity)
    record = {
        "lambda_D": rates.lambda_D,
        "lambda_E": rates.lambda_E,
        "lambda_C": rates.lambda_C,
        "capacity_K": args.capacity,
        "dmax": dmax,
        "truncation_mass": dist.truncation_mass,
        "residual_norm": dist.residual_norm,
        **sol.as_dict(),
    }
    _emit(_render(_record_table("oracle", record), args.format), args.output)
    if args.dump:
        _emit(dist.to_csv(), args.dump)
    return 0


def cmd_simulate(args) -> int:
    cfg = SimulationConfig(
        rates=_rates(args),
        capacity_K=args.capacity,
        horizon=args.horizon,
        warmup_fraction=args.warmup,
        replications=args.replications,
        base_seed=args.seed,
    )
    report = run_experiment(cfg)
    rows = [
        [name, est.mean, est.std_error, est.ci_low, est.ci_high]
        for name, est in report.estimates.items()
    ]
    prov = {
        "lambda_D": repr(cfg.rates.lambda_D),
        "lambda_E": repr(cfg.rates.lambda_E),
        "lambda_C": repr(cfg.rates.lambda_C),
        "capacity_K": str(cfg.capacity_K),
        "horizon": repr(cfg.horizon),
        "warmup_fraction": repr(cfg.warmup_fraction),
        "replications": str(cfg.replications),
        "base_seed": str(cfg.base_seed),
        "rng": RNG_ALGORITHM,
        "confidence": repr(report.confidence),
    }
    if cfg.replications > 1:
        prov["pasta_check"] = "pass" if pasta_check(report) else "FAIL"
    table = SweepTable(
        "simulate",
        [Column("metric"), Column("mean"), Column("std_error"), Column("ci_low"), Column("ci_high")],
        rows,
        prov,
        list(report.warnings),
    )
    _emit(_render(table, args.format), args.output)
    return 0


def cmd_sweep(args) -> int:
    if args.figure == "k-alpha":
        table = sweep_k_alpha(args.gamma_grid, args.alphas)
    elif args.figure == "k-beta":
        table = sweep_k_beta(args.alpha_grid, args.beta_grid, args.gamma)
    else:
        table = compare_sizing(args.gamma, args.alpha, args.beta_grid)
    _emit(_render(table, args.format), args.output)
    if args.svg:
        _emit(table_svg(table), args.svg)
    return 0


def cmd_validate(args) -> int:
    template = SimulationConfig(
        rates=NodeRates(0.0, args.lambda_e, args.lambda_c),
        capacity_K=1,
        horizon=args.horizon,
        warmup_fraction=args.warmup,
        replications=args.replications,
        base_seed=args.seed,
    )
    table = validation_grid(
        args.gamma_grid,
        args.k_grid,
        args.lambda_c,
        template,
        simulate=not args.no_sim,
        mass_budget=args.dmax_budget,
    )
    _emit(_render(table, args.format), args.output)
    for note in table.notes:
        print(f"WARNING: {note}", file=sys.stderr)
    return 0


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ehbattery",
        description="Battery sizing and validation for energy-harvesting sensor nodes.",
        epilog=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"ehbattery {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--format", choices=("human", "csv", "json-text"), default="human")
        p.add_argument("--output", "-o", help="write to this file instead of stdout")

    def rates(p: argparse.ArgumentParser) -> None:
        p.add_argument("--lambda-d", type=_positive, required=True, help="data packets/s")
        p.add_argument("--lambda-e", type=_positive, required=True, help="energy packets/s")
        p.add_argument("--lambda-c", type=_positive, required=True, help="connections/s")
        p.add_argument("--capacity", "-K", type=_positive_int, required=True)

    p = sub.add_parser("size", help="minimal battery capacity for depletion/overflow targets")
    p.add_argument("--gamma", type=float, help="lambda_D / lambda_E")
    p.add_argument("--lambda-d", type=_positive)
    p.add_argument("--lambda-e", type=_positive)
    p.add_argument("--alpha", type=_unit_open, required=True, help="depletion target")
    p.add_argument("--beta", type=_unit_open, required=True, help="overflow target")
    p.add_argument("--ep-size", type=_positive, help="energy per packet, for physical capacity")
    p.add_argument("--unit", default="", help="label for --ep-size (not interpreted)")
    common(p)
    p.set_defaults(func=cmd_size, parser=p)

    p = sub.add_parser("analyze", help="decoupled steady-state probabilities")
    rates(p)
    common(p)
    p.set_defaults(func=cmd_analyze, parser=p)

    p = sub.add_parser("oracle", help="exact joint-chain marginals")
    rates(p)
    p.add_argument("--dmax-budget", type=_unit_open, default=DEFAULT_MASS_BUDGET,
                   help="allowed stationary mass at the data-buffer cap")
    p.add_argument("--dmax-cap", type=_positive_int, default=100_000)
    p.add_argument("--dump", help="also write the joint distribution (d,e,probability) here")
    common(p)
    p.set_defaults(func=cmd_oracle, parser=p)

    p = sub.add_parser("simulate", help="Monte-Carlo estimates with 99%% confidence intervals")
    p.add_argument("--lambda-d", type=_nonnegative, required=True)
    p.add_argument("--lambda-e", type=_nonnegative, required=True)
    p.add_argument("--lambda-c", type=_nonnegative, required=True)
    p.add_argument("--capacity", "-K", type=_positive_int, required=True)
    p.add_argument("--horizon", type=_positive, default=1e5, help="simulated seconds")
    p.add_argument("--warmup", type=float, default=0.1, help="warm-up fraction of horizon")
    p.add_argument("--replications", type=_positive_int, default=30)
    p.add_argument("--seed", type=_seed, required=True)
    common(p)
    p.set_defaults(func=cmd_simulate, parser=p)

    p = sub.add_parser("sweep", help="sizing tables (k-alpha, k-beta, compare)")
    p.add_argument("--figure", choices=("k-alpha", "k-beta", "compare"), required=True)
    p.add_argument("--gamma-grid", type=_list_of(_unit_open), default=list(DEFAULT_GAMMAS))
    p.add_argument("--alphas", type=_list_of(_unit_open), default=list(FIG_K_ALPHA_ALPHAS))
    p.add_argument("--alpha-grid", type=_list_of(_unit_open), default=list(DEFAULT_PROBS))
    p.add_argument("--beta-grid", type=_list_of(_unit_open), default=None)
    p.add_argument("--gamma", type=_unit_open, default=None)
    p.add_argument("--alpha", type=_unit_open, default=0.05)
    p.add_argument("--svg", help="also write a line chart here")
    common(p)
    p.set_defaults(func=cmd_sweep, parser=p)

    p = sub.add_parser("validate", help="analytic vs exact vs simulated grid")
    p.add_argument("--gamma-grid", type=_list_of(_unit_open), required=True)
    p.add_argument("--k-grid", type=_list_of(_positive_int), required=True)
    p.add_argument("--lambda-e", type=_positive, default=1.0)
    p.add_argument("--lambda-c", type=_positive, default=2.0)
    p.add_argument("--horizon", type=_positive, default=1e5)
    p.add_argument("--warmup", type=float, default=0.1)
    p.add_argument("--replications", type=_positive_int, default=30)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--dmax-budget", type=_unit_open, default=DEFAULT_MASS_BUDGET)
    p.add_argument("--no-sim", action="store_true", help="skip the simulation columns")
    common(p)
    p.set_defaults(func=cmd_validate, parser=p)
    return parser


def _sweep_defaults(args) -> None:
    if args.command != "sweep":
        return
    if args.figure == "k-beta":
        args.gamma = FIG_K_BETA_GAMMA if args.gamma is None else args.gamma
        args.beta_grid = list(DEFAULT_PROBS) if args.beta_grid is None else args.beta_grid
    elif args.figure == "compare":
        args.gamma = 0.9 if args.gamma is None else args.gamma
        if args.beta_grid is None:
            args.beta_grid = [round(0.01 * i, 2) for i in range(1, 31)]


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _sweep_defaults(args)
    try:
        return args.func(args)
    except ModelError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        # out-of-range values that slipped past flag parsing
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
