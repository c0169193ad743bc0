"""Command-line front end.

Subcommands: estimate-capture, analyze, sweep, simulate, validate-table.
Parameters come from built-in defaults, then an optional JSON config file
(``--config``), then command-line flags. Output files go to ``--out-dir``,
defaulting to $CSALOHA_OUT_DIR or the current directory.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .andor import evaluate, sweep_ratio
from .capture import (CaptureTable, TableFormatError, chain_capture, load_table, save_table, synthetic_table,
                      table_digest, zero_capture_table)
from .macsim import PhyOracle, TableOracle, empirical_stats, example_graph, run_receiver, simulate
from .output import atomic_write, make_header, render_table
from .phy import PhyEngine, PhyScenario, estimate_capture_table

OUT_DIR_ENV = "CSALOHA_OUT_DIR"
log = logging.getLogger("csaloha")


class ConfigError(Exception):
    pass


def parse_grid(text) -> list[float]:
    """``"a:b:step"`` (inclusive of b) or a comma-separated list."""
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    text = str(text).strip()
    try:
        if ":" in text:
            a, b, step = (float(x) for x in text.split(":"))
            if step <= 0 or b < a:
                raise ValueError
            n = int(np.floor((b - a) / step + 1e-9)) + 1
            return [round(a + i * step, 12) for i in range(n)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}; use start:stop:step or a comma list") from None


def resolve_table(spec: str, t_max: int | None = None) -> CaptureTable:
    """Table path, or ``synthetic:<kind>[:p1]`` with kind collision|perfect-mud|singleton-prob|zero."""
    if spec.startswith("synthetic:"):
        parts = spec.split(":")
        kind = parts[1]
        size = t_max or 64
        if kind == "zero":
            return zero_capture_table(size)
        p1 = float(parts[2]) if len(parts) > 2 else None
        try:
            return synthetic_table(kind, size, p1)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"capture table {spec} does not exist")
    table = load_table(path)
    if t_max is not None and t_max < table.t_max:
        table = table.truncated(t_max)
    return table


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return cfg


def merged(args, defaults: dict, keys) -> dict:
    """defaults < config file < flags given on the command line."""
    cfg = dict(defaults)
    cfg.update(load_config(args.config))
    for key in keys:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    return cfg


def out_path(args, name: str) -> Path:
    base = args.out_dir or os.environ.get(OUT_DIR_ENV) or "."
    return Path(base) / name


def scenario_from(cfg: dict) -> PhyScenario:
    sc = dict(cfg.get("scenario", {}))
    if cfg.get("snr_db") is not None:
        sc["snr_db"] = cfg["snr_db"]
    if cfg.get("seed") is not None:
        sc["seed"] = cfg["seed"]
    try:
        return PhyScenario.from_dict(sc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid PHY scenario: {exc}") from None


# -- subcommands -----------------------------------------------------------

def cmd_estimate_capture(args) -> int:
    cfg = merged(args, {"t_max": 15, "t_sim": 10_000, "seed": 0}, ("t_max", "t_sim", "snr_db", "seed"))
    scenario = scenario_from(cfg)
    cfg["scenario"] = scenario.to_dict()
    if cfg["t_max"] < 1 or cfg["t_sim"] < 1:
        raise ConfigError("t_max and t_sim must be >= 1")
    if cfg["t_max"] > scenario.n_users:
        raise ConfigError("t_max cannot exceed the number of users")
    table = estimate_capture_table(scenario, int(cfg["t_max"]), int(cfg["t_sim"]), workers=args.threads,
                                   progress=args.verbose)
    path = out_path(args, args.output or "capture_table.json")
    header = make_header("estimate-capture", cfg, scenario.seed)
    tmp = path.with_name(f".{path.name}.partial")
    path.parent.mkdir(parents=True, exist_ok=True)
    save_table(table, tmp, header=header)
    os.replace(tmp, path)
    for t_a, row in enumerate(table.rows(), start=1):
        mean_s = float(np.dot(np.arange(t_a + 1), row))
        print(f"t_A={t_a:3d}  p(1|t_A)={row[1]:.4f}  p(t_A|t_A)={row[-1]:.4f}  E[s]={mean_s:.3f}")
    print(f"wrote {path}")
    return 0


def cmd_analyze(args) -> int:
    cfg = merged(args, {"beta": 2.0, "ratio": 1.0, "tol": 1e-10, "max_iter": 10_000},
                 ("table", "beta", "ratio", "t_max"))
    if not cfg.get("table"):
        raise ConfigError("analyze needs --table (a file or synthetic:<kind>)")
    table = resolve_table(cfg["table"], cfg.get("t_max"))
    C = chain_capture(table)
    trace = evaluate(float(cfg["beta"]), float(cfg["ratio"]) - 1.0, C, tol=cfg["tol"], max_iter=cfg["max_iter"])
    cfg["table_digest"] = table_digest(table)
    row = {
        "m_over_n": float(cfg["ratio"]), "beta": float(cfg["beta"]), "p_r": trace.p_r, "t": trace.throughput,
        "iterations": trace.iterations_used, "converged": int(trace.converged),
        "truncation_mass": trace.truncation_mass,
    }
    header = make_header("analyze", cfg, None)
    atomic_write(out_path(args, args.output or "analyze.tsv"), render_table([row], list(row), header))
    trace_rows = [{"m": m, "r": r, "q": q} for m, (r, q) in enumerate(trace.iterates, start=1)]
    atomic_write(out_path(args, "analyze_trace.tsv"), render_table(trace_rows, ["m", "r", "q"], header))
    print(f"P_R={trace.p_r:.10f}  T={trace.throughput:.10f}  iterations={trace.iterations_used}"
          f"  converged={trace.converged}  truncation_mass={trace.truncation_mass:.3g}")
    if trace.truncation_mass > 1e-6:
        print(f"warning: slot-degree mass {trace.truncation_mass:.3g} beyond t_max={table.t_max}", file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    cfg = merged(args, {"ratio_grid": "0.5:1.5:0.1", "beta_grid": "0.5:6:0.1", "refine": 0},
                 ("table", "ratio_grid", "beta_grid", "refine", "t_max"))
    if not cfg.get("table"):
        raise ConfigError("sweep needs --table (a file or synthetic:<kind>)")
    ratios = parse_grid(cfg["ratio_grid"])
    betas = parse_grid(cfg["beta_grid"])
    table = resolve_table(cfg["table"], cfg.get("t_max"))
    C = chain_capture(table)
    res = sweep_ratio(ratios, C, betas, refine=int(cfg["refine"]), workers=args.threads)
    cfg["table_digest"] = table_digest(table)
    header = make_header("sweep", cfg, None)
    summary = res.summary_rows()
    atomic_write(out_path(args, "sweep_summary.tsv"),
                 render_table(summary, ["m_over_n", "beta_star", "p_r_star", "t_star"], header))
    atomic_write(out_path(args, "sweep_long.tsv"),
                 render_table(list(res.long_rows()), ["m_over_n", "beta", "p_r", "t"], header))
    best = max(summary, key=lambda r: r["t_star"])
    for r in summary:
        print(f"M/N={r['m_over_n']:.4f}  beta*={r['beta_star']:.3f}  P_R*={r['p_r_star']:.6f}  T*={r['t_star']:.6f}")
    print(f"max T*={best['t_star']:.6f} at M/N={best['m_over_n']:.4f} (beta*={best['beta_star']:.3f})")
    return 0


def cmd_simulate(args) -> int:
    cfg = merged(args, {"n_users": 1000, "ratio": 1.0, "beta": 2.0, "runs": 10, "seed": 0,
                        "oracle": "synthetic:collision"},
                 ("n_users", "ratio", "beta", "runs", "seed", "oracle", "graph", "t_max"))
    oracle_spec = cfg["oracle"]
    if oracle_spec.startswith("phy:"):
        scenario = scenario_from({"scenario": load_config(oracle_spec[4:])})
        cfg["n_users"] = scenario.n_users
        oracle = PhyOracle(PhyEngine(scenario))
    else:
        oracle = TableOracle(resolve_table(oracle_spec, cfg.get("t_max") or 256))
    seed = int(cfg["seed"])
    if cfg.get("graph") == "example":
        graph = example_graph()
        reports = [run_receiver(graph, oracle, np.random.default_rng(seed))]
    elif cfg.get("graph"):
        raise ConfigError(f"unknown fixture graph {cfg['graph']!r}")
    else:
        n = int(cfg["n_users"])
        m = int(round(n * float(cfg["ratio"])))
        if n < 1 or m < 1 or int(cfg["runs"]) < 1:
            raise ConfigError("n_users, slots and runs must be positive")
        if float(cfg["beta"]) <= 0 or float(cfg["beta"]) / n > 1:
            raise ConfigError("beta must satisfy 0 < beta/N <= 1")
        reports = simulate(n, m, float(cfg["beta"]), oracle, int(cfg["runs"]), seed)
    header = make_header("simulate", cfg, seed)
    run_rows = [{"run": k, "n_users": r.n_users, "n_slots": r.n_slots, "recovered": r.recovered, "p_r": r.p_r,
                 "t": r.throughput, "oracle_calls": r.oracle_calls, "order": ",".join(map(str, r.order))
                 if cfg.get("graph") else None}
                for k, r in enumerate(reports)]
    cols = ["run", "n_users", "n_slots", "recovered", "p_r", "t", "oracle_calls"] + (["order"] if cfg.get("graph") else [])
    stats = empirical_stats(reports)
    summary = {"runs": stats.runs, "mean_p_r": stats.mean_p_r, "p_r_half_width": stats.p_r_half_width,
               "mean_t": stats.mean_t, "t_half_width": stats.t_half_width}
    atomic_write(out_path(args, "simulate_runs.tsv"), render_table(run_rows, cols, header))
    atomic_write(out_path(args, "simulate_summary.tsv"), render_table([summary], list(summary), header))
    hw = "" if stats.p_r_half_width is None else f" +- {stats.p_r_half_width:.4f}"
    print(f"runs={stats.runs}  P_R={stats.mean_p_r:.4f}{hw}  T={stats.mean_t:.4f}")
    return 0


def cmd_validate_table(args) -> int:
    if not args.table:
        raise ConfigError("validate-table needs --table")
    try:
        table = load_table(args.table)
    except (TableFormatError, OSError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    C = chain_capture(table)
    print(f"valid capture table: t_max={table.t_max} source={table.meta.get('source')} "
          f"snr_db={table.meta.get('snr_db')} T_sim={table.meta.get('T_sim')}")
    for t, c in enumerate(C.C):
        print(f"C({t})={c:.6f}")
    return 0


COMMANDS = {
    "estimate-capture": cmd_estimate_capture,
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "validate-table": cmd_validate_table,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--seed", type=int, help="master random seed")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker processes (results do not depend on this)")
    common.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or .)")
    common.add_argument("--output", help="name of the main output file")
    common.add_argument("-v", "--verbose", action="store_true", help="progress lines on stderr")

    parser = argparse.ArgumentParser(prog="csaloha", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate-capture", parents=[common], help="Monte-Carlo capture table p(s|t_A)")
    p.add_argument("--t-max", dest="t_max", type=int, help="largest slot degree t_A (default 15)")
    p.add_argument("--t-sim", dest="t_sim", type=int, help="trials per slot degree (default 10000)")
    p.add_argument("--snr-db", dest="snr_db", type=float, help="1/sigma_n^2 in dB (default 10)")

    table_help = "capture-table file or synthetic:<collision|perfect-mud|singleton-prob:P1|zero>"
    p = sub.add_parser("analyze", parents=[common], help="and-or fixed point at one (beta, M/N)")
    p.add_argument("--table", help=table_help)
    p.add_argument("--beta", type=float, help="average slot degree")
    p.add_argument("--ratio", type=float, help="M/N")
    p.add_argument("--t-max", dest="t_max", type=int, help="truncate (or size synthetic) table")

    p = sub.add_parser("sweep", parents=[common], help="optimise beta for each M/N")
    p.add_argument("--table", help=table_help)
    p.add_argument("--ratio-grid", dest="ratio_grid", help="M/N grid, start:stop:step or list")
    p.add_argument("--beta-grid", dest="beta_grid", help="beta grid, start:stop:step or list")
    p.add_argument("--refine", type=int, help="local grid refinements around each optimum")
    p.add_argument("--t-max", dest="t_max", type=int, help="truncate (or size synthetic) table")

    p = sub.add_parser("simulate", parents=[common], help="finite-N frameless ALOHA simulation")
    p.add_argument("--n-users", dest="n_users", type=int, help="number of users N")
    p.add_argument("--ratio", type=float, help="M/N")
    p.add_argument("--beta", type=float, help="average slot degree")
    p.add_argument("--runs", type=int, help="independent runs")
    p.add_argument("--oracle", help=f"{table_help}, or phy:<scenario.json>")
    p.add_argument("--graph", choices=["example"], help="use a fixed fixture graph")
    p.add_argument("--t-max", dest="t_max", type=int, help="size of synthetic oracle tables")

    p = sub.add_parser("validate-table", parents=[common], help="check a capture-table file")
    p.add_argument("--table", help="capture-table file")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, TableFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
