"""Command-line entry point: ``tidiss <command> ...``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from collections import defaultdict

from .config import ConfigError, default_config, load_config, parse_config, to_toml
from .experiments import ExperimentError, ResultTable, run

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2

GROUP_KEYS = {
    "fig1a": ("model", "theta"),
    "fig1b": ("kappa",),
    "fig2a": ("variant",),
    "sweep": ("kappa",),
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tidiss", description="Translation-invariant dissipator experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    fig = sub.add_parser("figures", help="reproduce a figure sweep")
    fig.add_argument("figure", choices=("fig1a", "fig1b", "fig2a"))
    fig.add_argument("--config", help="TOML config (defaults to the built-in grid)")
    _common(fig)

    for name, text in (("steady", "steady state vs Gibbs state"),
                       ("diagnose", "closed-form rate identities"),
                       ("sweep", "Bures error over configured grids")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True)
        _common(p)

    val = sub.add_parser("validate-config", help="parse a config and print it normalised")
    val.add_argument("path")
    return ap


def _common(p):
    p.add_argument("--out", help="output path prefix (overrides config)")
    p.add_argument("--plots", action="store_true", help="also write an SVG plot")
    p.add_argument("--workers", type=int, help="parallel worker processes")


def _resolve(args):
    if args.command == "figures":
        cfg = load_config(args.config) if args.config else default_config(args.figure)
        if cfg.experiment != args.figure:
            raise ConfigError(f"config is for experiment '{cfg.experiment}', not '{args.figure}'")
    else:
        cfg = load_config(args.config)
        if cfg.experiment != args.command:
            raise ConfigError(f"config is for experiment '{cfg.experiment}', not '{args.command}'")
    overrides = {}
    if args.out:
        overrides["output"] = args.out
    if args.plots:
        overrides["emit_plots"] = True
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        cfg = parse_config({**cfg.normalized(), **overrides})
    return cfg


def summarize(table: ResultTable, experiment: str) -> list[str]:
    keys = GROUP_KEYS.get(experiment)
    if not keys or "bures" not in table.columns:
        return [f"{experiment}: {len(table.rows)} rows, {table.n_failed} failed"]
    groups = defaultdict(list)
    for r in table.rows:
        groups[tuple(r[k] for k in keys)].append(r)
    lines = []
    for key, rows in groups.items():
        vals = [r["bures"] for r in rows if not math.isnan(r["bures"])]
        conv = sum(bool(r["converged"]) for r in rows)
        label = " ".join(f"{k}={v}" for k, v in zip(keys, key))
        span = f"D_B in [{min(vals):.3e}, {max(vals):.3e}]" if vals else "no values"
        lines.append(f"{experiment} {label}: {len(rows)} rows, {conv} converged, {span}")
    return lines


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "validate-config":
        try:
            cfg = load_config(args.path)
        except ConfigError as exc:
            print(exc, file=sys.stderr)
            return EXIT_CONFIG
        sys.stdout.write(to_toml(cfg))
        return EXIT_OK

    try:
        cfg = _resolve(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG

    try:
        table = run(cfg)
    except (ExperimentError, ConfigError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    paths = table.write(cfg.output, plots=cfg.emit_plots)
    for line in summarize(table, cfg.experiment):
        print(line)
    for msg in table.failures:
        print(f"failed: {msg}", file=sys.stderr)
    print("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_PARTIAL if table.n_failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
