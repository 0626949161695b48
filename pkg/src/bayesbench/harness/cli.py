"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 run failure (every backend
failed or a shared stage crashed), 3 partial failure (some backends failed).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from ..errors import BenchError, ConfigError
from ..models import MODEL_KINDS, get_model
from .config import load_config
from .runner import RunFailure, plot_run_dir, run_benchmark

EXIT_OK, EXIT_CONFIG, EXIT_FAILED, EXIT_PARTIAL = 0, 1, 2, 3


def _use_color(stream) -> bool:
    return "NO_COLOR" not in os.environ and hasattr(stream, "isatty") and stream.isatty()


def _err(msg: str, color: str = "31") -> None:
    if _use_color(sys.stderr):
        msg = f"\033[{color}m{msg}\033[0m"
    print(msg, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bayesbench",
                                     description="Benchmark posterior samplers on synthetic models.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured benchmark")
    run.add_argument("--config", required=True, help="JSON configuration file")
    run.add_argument("--out", help="output directory (overrides output_dir)")
    run.add_argument("--seed", type=int, help="run seed (overrides seed)")
    run.add_argument("--serial", action="store_true",
                     help="run all chains one after another, for clean timings")

    plot = sub.add_parser("plot", help="re-render pll.svg from a run directory")
    plot.add_argument("--run", required=True, help="run directory")

    sub.add_parser("list-models", help="print model kinds and their configuration keys")
    return parser


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.out is not None:
            overrides["output_dir"] = args.out
        if args.seed is not None:
            overrides["seed"] = args.seed
        if overrides:
            cfg = dataclasses.replace(cfg, **overrides)
            problems = cfg.problems()
            if problems:
                raise ConfigError("invalid command line override", problems)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    try:
        artifacts = run_benchmark(cfg, serial=args.serial)
    except RunFailure as exc:
        _err(f"run failed: {exc}")
        return EXIT_FAILED
    for row in artifacts.metrics["backends"]:
        if row["status"] == "failed":
            f = row["failure"]
            _err(f"backend {row['backend_id']} failed ({f['reason']}): {f['detail']}")
    print(f"{artifacts.status}: artifacts in {artifacts.directory}")
    return {"ok": EXIT_OK, "partial": EXIT_PARTIAL}.get(artifacts.status, EXIT_FAILED)


def _cmd_plot(args) -> int:
    try:
        path = plot_run_dir(args.run)
    except (OSError, KeyError, ValueError, BenchError) as exc:
        _err(f"cannot plot {args.run}: {exc}")
        return EXIT_FAILED
    print(path)
    return EXIT_OK


def _cmd_list_models(args) -> int:
    for kind in MODEL_KINDS:
        print(f"{kind}: {' '.join(get_model(kind).config_keys)}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "plot": _cmd_plot, "list-models": _cmd_list_models}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
