"""Command-line entry point.

Exit status: 0 on success, 1 when ``selftest`` fails, 2 on a configuration
error, 3 when every trial diverged.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace

from lowrank_svrg.harness.config import ConfigError, default_spec, load_spec
from lowrank_svrg.harness.runner import AllTrialsDiverged, run_experiment
from lowrank_svrg.harness.selftest import run_selftest

EXIT_CONFIG = 2
EXIT_DIVERGED = 3

SUBCOMMANDS = {
    "convergence": "convergence",
    "phase": "phase",
    "stat-error": "stat_error",
    "grid": "grid",
}
HELP = {
    "convergence": "error versus effective data passes",
    "phase": "exact-recovery rate over a rescaled sample-size sweep",
    "stat-error": "final error of noisy recovery for several sample sizes",
    "grid": "sweep step size, component count and inner length",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lowrank-svrg",
        description="Low-rank matrix recovery experiments with variance-reduced solvers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="JSON experiment spec")
        p.add_argument("--seed", type=int, help="override base_seed")
        p.add_argument("--out", help="directory for the CSV (stdout if omitted)")
        p.add_argument("--model", choices=("sensing", "completion", "onebit"))
        p.add_argument("--solver", choices=("svrg", "gd", "both"))
        p.add_argument("--trials", type=int)
        p.add_argument("--jobs", type=int, help="parallel worker processes")
        p.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("selftest", help="fast gradient, unbiasedness and recovery checks")
    return parser


def resolve_spec(args, kind):
    if args.config:
        spec = load_spec(args.config)
        if spec.kind != kind:
            raise ConfigError(f"config describes a {spec.kind!r} experiment, not {kind!r}")
        if args.model:
            spec = spec.replace(model=args.model)
    else:
        spec = default_spec(kind, args.model or "sensing")
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        changes["base_seed"] = args.seed
    if args.solver:
        changes["solver"] = args.solver
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    try:
        return replace(spec, **changes) if changes else spec
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        return 0 if run_selftest(sys.stdout) else 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        spec = resolve_spec(args, SUBCOMMANDS[args.command])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        text = run_experiment(spec)
    except AllTrialsDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    out_dir = args.out or (os.path.dirname(spec.output) if spec.output else None)
    if out_dir is None:
        sys.stdout.write(text)
        return 0
    os.makedirs(out_dir, exist_ok=True)
    name = os.path.basename(spec.output) if spec.output else f"{spec.name}.csv"
    path = os.path.join(out_dir, name)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
