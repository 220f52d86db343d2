"""Command-line entry point: ``guided-vi run|check|metrics``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from . import checks
from .controller import ControllerMode
from .scenarios import (
    ConfigError,
    ScenarioName,
    compute_metrics,
    default_spec,
    dump_config,
    load_config,
    read_telemetry,
    run_scenario,
)

MODES = {"learning": ControllerMode.LEARNING, "actor-frozen": ControllerMode.ACTOR_ONLY_FROZEN,
         "frozen": ControllerMode.FULLY_FROZEN}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="guided-vi", description=__doc__)
    parser.add_argument("--dump-default-config", metavar="SCENARIO", nargs="?", const="nominal_learning",
                        choices=[s.value for s in ScenarioName],
                        help="print the built-in config for a scenario and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    run = sub.add_parser("run", help="simulate a scenario")
    run.add_argument("scenario", choices=[s.value for s in ScenarioName])
    run.add_argument("--config", help="YAML config; missing keys take the built-in defaults")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", default="runs/out", help="output directory (default: %(default)s)")
    run.add_argument("--snapshot", help="weight snapshot to start from (required for frozen_policy)")
    run.add_argument("--mode", choices=sorted(MODES), help="controller mode for the whole run")
    run.add_argument("--duration", type=float, help="episode length in seconds")
    run.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")

    sub.add_parser("check", help="run the oracle and gradient self-checks")

    met = sub.add_parser("metrics", help="recompute run metrics from a telemetry CSV")
    met.add_argument("csv")
    met.add_argument("--warmup", type=float, default=2.0)
    return parser


def _cmd_run(args) -> int:
    spec = load_config(args.config) if args.config else default_spec(args.scenario)
    spec.name = ScenarioName(args.scenario)
    if args.seed is not None:
        spec.seed = args.seed
    if args.snapshot:
        spec.snapshot = args.snapshot
    if args.mode:
        spec.mode_schedule = [(0.0, MODES[args.mode])]
    if args.duration is not None:
        spec.duration = args.duration
    result = run_scenario(spec, args.out, gnuplot=args.gnuplot)
    s = result.summary
    print(f"scenario        {spec.name.value} (seed {spec.seed}, {spec.duration:g} s)")
    print(f"abs avg error   {s.abs_avg_error:.4f} deg (first {s.warmup:g} s excluded)")
    print(f"max |error|     {s.max_abs_error:.4f} deg")
    conv = f"yes at {s.convergence_time:.2f} s" if s.converged else "no"
    print(f"converged       {conv}")
    print(f"faults/spikes   {s.n_faults}/{s.spike_count}")
    print(f"wall time       {result.wall_time:.2f} s")
    print(f"telemetry       {result.telemetry_path}")
    return 0


def _cmd_check() -> int:
    results = checks.run_all()
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def _cmd_metrics(args) -> int:
    summary = compute_metrics(read_telemetry(args.csv), warmup=args.warmup)
    out = summary.to_json()
    out.pop("final_weights")
    print(json.dumps(out, indent=2))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.dump_default_config:
        sys.stdout.write(dump_config(default_spec(args.dump_default_config)))
        return 0
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "check":
            return _cmd_check()
        if args.command == "metrics":
            return _cmd_metrics(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    build_parser().print_help()
    return 1


if __name__ == "__main__":
    sys.exit(main())
