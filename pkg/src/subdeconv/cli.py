"""Command-line entry point.

Subcommands:

* ``run``   — execute a configured experiment, write report files
* ``curve`` — sweep the sample count and tabulate the error curve
* ``gen``   — generate a hidden-source dataset as CSV

Exit codes: 0 on success, 2 on configuration errors, 3 when every run of a
pipeline failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import load_config, load_source_spec
from .datagen import RngSeed, gen_source
from .errors import ConfigError
from .pipeline import emit_curve, run_pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PIPELINE = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subdeconv",
        description="Blind subspace deconvolution experiment harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a configured experiment")
    run_p.add_argument("--config", required=True, help="TOML experiment file")
    run_p.add_argument("--seed", type=int, default=None, help="override seed")
    run_p.add_argument("--runs", type=int, default=None, help="override run count")
    run_p.add_argument("--jobs", type=int, default=None, help="parallel runs")
    run_p.add_argument("--out", default=None, help="output directory")

    curve_p = sub.add_parser("curve", help="error curve over sample counts")
    curve_p.add_argument("--config", required=True, help="TOML experiment file")
    curve_p.add_argument(
        "--T", required=True, help="comma-separated sample counts, e.g. 1000,10000"
    )
    curve_p.add_argument("--seed", type=int, default=None)
    curve_p.add_argument("--runs", type=int, default=None)
    curve_p.add_argument("--jobs", type=int, default=None)
    curve_p.add_argument("--out", default=None, help="output directory")

    gen_p = sub.add_parser("gen", help="generate a source dataset as CSV")
    gen_p.add_argument("--spec", required=True, help="TOML file with [[database]]")
    gen_p.add_argument("--out", required=True, help="output CSV path")
    gen_p.add_argument("--T", type=int, default=None, help="override sample count")
    gen_p.add_argument("--seed", type=int, default=None, help="override seed")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(
        args.config,
        seed=args.seed,
        runs=args.runs,
        jobs=args.jobs,
        output_dir=args.out,
    )
    report = run_pipeline(cfg)
    agg = report.aggregate()
    if agg["runs_failed"] == agg["runs_total"]:
        for rec in report.records:
            print(f"run {rec.index}: {rec.error}", file=sys.stderr)
        return EXIT_PIPELINE
    amari = agg["amari"]
    print(
        f"runs {agg['runs_total']} (failed {agg['runs_failed']})  "
        f"amari mean {amari['mean']:.6f}  std {amari['std']:.6f}  "
        f"median {amari['median']:.6f}  "
        f"sweeps {agg['sweeps']['min']}-{agg['sweeps']['max']}"
    )
    if cfg.output_dir:
        print(f"report written to {cfg.output_dir}")
    return EXIT_OK


def _cmd_curve(args) -> int:
    try:
        sample_counts = [int(t) for t in args.T.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"invalid --T list {args.T!r}: {exc}") from exc
    if not sample_counts:
        raise ConfigError("--T needs at least one sample count")
    base = load_config(
        args.config,
        seed=args.seed,
        runs=args.runs,
        jobs=args.jobs,
        output_dir=None,
    )
    cfgs = [dataclasses.replace(base, T=t) for t in sample_counts]
    rows, slope = emit_curve(cfgs, output_dir=args.out)
    all_failed = all(mean is None for _, mean, *_ in rows)
    for row in rows:
        t, mean = row[0], row[1]
        if mean is None:
            print(f"T {t}: all runs failed")
        else:
            print(f"T {t}: mean amari {mean:.6f}")
    print(f"fitted power-law exponent: {slope if slope is not None else 'undefined'}")
    if args.out:
        print(f"curve written to {args.out}")
    return EXIT_PIPELINE if all_failed else EXIT_OK


def _cmd_gen(args) -> int:
    specs, file_T, file_seed = load_source_spec(args.spec)
    T = args.T if args.T is not None else file_T
    seed = args.seed if args.seed is not None else file_seed
    if T < 1:
        raise ConfigError(f"sample count must be >= 1, got {T}")
    source, _ = gen_source(specs, T, RngSeed(seed))
    source.to_csv(args.out)
    print(f"wrote {source.dim} x {source.count} samples to {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "curve":
            return _cmd_curve(args)
        return _cmd_gen(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
