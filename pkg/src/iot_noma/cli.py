"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config, validate
from .gold_codes import codebook_rows, default_family, select_codebook

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iot-noma", description="Gold-code assignment for IoT NOMA")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("codes", help="generate, verify and export a codebook")
    c.add_argument("--degree", type=int, default=7)
    c.add_argument("--count", type=int, default=80)
    c.add_argument("--strategy", choices=("greedy", "first"), default="greedy")
    c.add_argument("--misalignment", type=int, default=2)
    c.add_argument("--out", help="CSV path for the chips (default: summary only)")
    c.add_argument("--rho-out", help="CSV path for the effective correlation matrix")

    r = sub.add_parser("run", help="run one configuration for one seed")
    r.add_argument("--config")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    r.add_argument("--seed", type=int, help="default: every seed in the config")
    r.add_argument("--out", help="output root (default: $IOT_NOMA_OUTPUT or config output_dir)")

    s = sub.add_parser("sweep", help="run every config in a directory across seeds")
    s.add_argument("--config-dir", required=True)
    s.add_argument("--seeds", help="comma-separated seeds overriding each config")
    s.add_argument("--agents", help="comma-separated agents; each config is run once per agent")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--parallel", type=int, default=1)
    s.add_argument("--out")
    s.add_argument("--report", help="write the aggregated report JSON here")

    rep = sub.add_parser("report", help="aggregate finished runs")
    rep.add_argument("--runs", nargs="+", required=True)
    rep.add_argument("--json", help="also write the report as JSON")
    rep.add_argument("--tail", type=int, default=100)

    pd = sub.add_parser("plot-data", help="emit convergence curves and variance ratios as CSV")
    pd.add_argument("--runs", nargs="+", required=True)
    pd.add_argument("--out", required=True)
    pd.add_argument("--tail", type=int, default=50)
    return p


def _cmd_codes(args) -> int:
    try:
        fam = default_family(args.degree)
        book = select_codebook(fam, args.count, args.strategy, args.misalignment)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    hist = fam.correlation_histogram()
    off = book.rho[~np.eye(book.size, dtype=bool)]
    summary = {
        "degree": fam.degree,
        "length": fam.length,
        "family_size": fam.size,
        "t": fam.t_n,
        "allowed_values": sorted(fam.allowed_values()),
        "correlation_histogram": {str(k): int(v) for k, v in sorted(hist.items())},
        "selected": [int(i) for i in book.selected],
        "mean_offdiag_rho": float(off.mean()) if off.size else 0.0,
        "max_offdiag_rho": float(off.max()) if off.size else 0.0,
    }
    print(json.dumps(summary, indent=2))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["family_index", *(f"chip{k}" for k in range(fam.length))])
            w.writerows(codebook_rows(book))
    if args.rho_out:
        np.savetxt(args.rho_out, book.rho, delimiter=",", fmt="%.17g")
    return EXIT_OK


def _cmd_run(args) -> int:
    from . import runner

    cfg = load_config(args.config, args.set)
    seeds = [args.seed] if args.seed is not None else cfg.seeds
    for seed in seeds:
        s = runner.run(cfg, seed, args.out)
        m = s["metrics"]["combined_reward"]
        print(f"{s['run_dir']}: reward {m['mean']:.6g} ± {m['ci95']:.3g} (last {s['tail_episodes']})")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from . import runner

    files = sorted(Path(args.config_dir).glob("*.json"))
    if not files:
        raise ConfigError(f"{args.config_dir}: no *.json configs")
    configs = [load_config(f, args.set) for f in files]
    if args.agents:
        configs = [validate(runner.with_agent(c, a.strip())) for c in configs for a in args.agents.split(",")]
    seeds = None
    if args.seeds:
        try:
            seeds = [int(x) for x in args.seeds.split(",")]
        except ValueError as exc:
            raise ConfigError(f"--seeds: expected comma-separated ints ({exc})") from exc
        if len(set(seeds)) != len(seeds):
            raise ConfigError("--seeds: must be distinct")
    results = runner.sweep(configs, seeds, args.parallel, args.out)
    rep = runner.report([r["run_dir"] for r in results])
    print(runner.format_report(rep), end="")
    if args.report:
        Path(args.report).write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _cmd_report(args) -> int:
    from . import runner

    rep = runner.report(args.runs, args.tail)
    print(runner.format_report(rep), end="")
    if args.json:
        Path(args.json).write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _cmd_plot_data(args) -> int:
    from . import runner

    for p in runner.emit_plot_data(args.runs, args.out, args.tail):
        print(p)
    return EXIT_OK


COMMANDS = {
    "codes": _cmd_codes,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
    "plot-data": _cmd_plot_data,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.cmd](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # anything else is a runtime failure
        logging.getLogger(__name__).debug("traceback", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
