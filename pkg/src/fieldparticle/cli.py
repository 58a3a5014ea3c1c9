"""Command-line entry point.

Exit codes: 0 all verdicts pass, 1 usage or validation error, 2 a verdict failed.
"""
from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, load_config

SUBCOMMANDS = {
    "run": None,
    "kernels": ["kernel_identities", "laplace_consistency"],
    "resolvent": ["resolvent_decay"],
    "stability": ["stability_gate"],
    "evolve": None,
    "ensemble": ["covariance_convergence", "gaussianity"],
    "gibbs": ["gibbs_invariance"],
    "two-temp": ["two_temperature"],
    "mixing": ["mixing"],
    "all": None,
}

HELP = {
    "run": "run the checks listed in the config (empty list: validate only)",
    "kernels": "kernel identities and Laplace-symbol consistency; writes the kernel table",
    "resolvent": "resolvent decay fit (power law for KGF, exponential for WF)",
    "stability": "stability scan of the configured coupling and an over-coupled variant",
    "evolve": "evolve one member of the configured initial law",
    "ensemble": "covariance convergence and kurtosis of mixed observables",
    "gibbs": "invariance of the coupled Gibbs ensemble",
    "two-temp": "energy current of the two-temperature composite",
    "mixing": "equilibrium correlation decay under the limit law",
    "all": "the full acceptance suite",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML experiment config")
    common.add_argument("--out", metavar="DIR", help="output directory (default: config 'output')")
    common.add_argument("--seed", type=_u64, metavar="U64", help="base seed (sets ensemble.base_seed)")
    common.add_argument("--workers", type=_positive, metavar="N", default=os.cpu_count() or 1,
                        help="worker processes for ensemble evaluation (default: logical cores)")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VAL",
                        help="dotted config override, e.g. coupling.g=0.8 (repeatable)")
    common.add_argument("--field", "--preset", dest="preset", choices=["wf", "kgf"],
                        help="field preset for the coupling block")
    parser = _Parser(prog="fieldparticle", description="Field-particle numerical laboratory.")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, parents=[common], help=HELP[name], description=HELP[name])
        if name == "ensemble":
            p.add_argument("--size", type=_positive, help="ensemble size (sets ensemble.size)")
            p.add_argument("--t", dest="times", metavar="LIST", help="comma-separated times (sets ensemble.times)")
        if name == "evolve":
            p.add_argument("--method", choices=["duhamel", "leapfrog"], help="integrator (sets integrator.method)")
        if name == "all":
            p.add_argument("--criteria", metavar="LIST", help="comma-separated criterion numbers (default: all)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    from .experiment import run, run_evolve, run_suite, write_kernel_table

    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"ensemble.base_seed={args.seed}")
    if getattr(args, "size", None) is not None:
        overrides.append(f"ensemble.size={args.size}")
    if getattr(args, "times", None):
        overrides.append(f"ensemble.times=[{args.times}]")
    if getattr(args, "method", None):
        overrides.append(f'integrator.method="{args.method}"')
    try:
        cfg = load_config(args.config, overrides, args.preset)
        out = args.out or cfg.output
        if args.command == "all":
            nums = None
            if args.criteria:
                nums = [int(x) for x in args.criteria.split(",") if x.strip()]
            outcome = run_suite(out, args.workers, nums, cfg, echo=print)
        elif args.command == "evolve":
            outcome = run_evolve(cfg, out)
            print(outcome.results[0].line())
        else:
            checks = SUBCOMMANDS[args.command]
            if args.command == "stability":
                # the scan is the subject here, not a precondition
                outcome = run(cfg, out, args.workers, checks, validate=False, echo=print)
            else:
                outcome = run(cfg, out, args.workers, checks, echo=print)
            if args.command == "kernels":
                write_kernel_table(cfg, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"artifacts written to {outcome.path}")
    return 0 if outcome.passed else 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
