"""Command-line entry point: ``icqr run``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .bench import METHODS, ExperimentConfig, config_to_mapping, load_config, run_experiment
from .report import FORMATS, emit_report, format_width_quantiles
from .synthetic import BUILTIN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icqr",
        description="Benchmark naive, QR, CQR and ICQR prediction intervals.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the repeated split/train/calibrate experiment")
    run.add_argument("--config", type=Path, help="flat key = value experiment config")
    run.add_argument("--dataset", help="CSV file (overrides the config)")
    run.add_argument("--response", help="response column of the CSV")
    run.add_argument("--synthetic", choices=sorted(BUILTIN), help="use a built-in generator")
    run.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--epochs", type=int)
    run.add_argument("--format", choices=FORMATS, default="table")
    run.add_argument("--output", default="-", help="output path, '-' for stdout")
    run.add_argument("--width-quantiles", type=Path, help="also write per-method width quantile CSV")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    elif args.dataset or args.synthetic:
        cfg = None
    else:
        raise ValueError("give --config, --dataset or --synthetic")
    overrides = {}
    if args.dataset:
        overrides.update(dataset=args.dataset, synthetic=None)
    if args.synthetic:
        overrides.update(synthetic=args.synthetic, dataset=None)
    if args.response:
        overrides["response"] = args.response
    if args.methods:
        overrides["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.seed is not None:
        overrides["seed"] = args.seed
    if cfg is None:
        cfg = ExperimentConfig(**overrides)
    else:
        cfg = replace(cfg, **overrides)
    if args.epochs is not None:
        cfg = replace(cfg, net=replace(cfg.net, epochs=args.epochs))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        reports = run_experiment(cfg, jobs=args.jobs)
        emit_report(reports, args.format, args.output, config=config_to_mapping(cfg))
        if args.width_quantiles is not None:
            args.width_quantiles.write_text(format_width_quantiles(reports), encoding="utf-8")
    except Exception as exc:
        print(f"icqr: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
