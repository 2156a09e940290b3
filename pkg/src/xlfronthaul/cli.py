"""Command-line entry point: ``xlfronthaul {run,cdf,validate}``."""

import argparse
import logging
import os
import sys

import numpy as np

from . import harness
from .validation import run_suite


def _schemes(text):
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _summary(records, schemes):
    lines = [f"{'scheme':<15} {'median SE':>10} {'mean SE':>10} {'mean sum SE':>12}"]
    for scheme in schemes:
        se = np.array([r.se for r in records if r.scheme == scheme])
        if se.size == 0:
            continue
        sums = {r.drop: r.sum_se for r in records if r.scheme == scheme}
        lines.append(f"{scheme:<15} {np.median(se):>10.4f} {se.mean():>10.4f} "
                     f"{np.mean(list(sums.values())):>12.4f}")
    return "\n".join(lines)


def cmd_run(args) -> int:
    config = harness.load_config(args.config, seed=args.seed, n_drops=args.drops,
                                 out=args.out, schemes=args.schemes)
    os.makedirs(config.out, exist_ok=True)
    records, flags = harness.run_monte_carlo(config, threads=args.threads)
    harness.write_records(records, os.path.join(config.out, "records.csv"))
    for scheme in config.schemes:
        if any(r.scheme == scheme for r in records):
            harness.emit_cdf(records, scheme, harness.cdf_path(config.out, scheme))
    if flags:
        harness.write_flags(flags, os.path.join(config.out, "flags.csv"))
    harness.save_config(config, os.path.join(config.out, "config.ini"))
    print(_summary(records, config.schemes))
    if flags:
        print(f"{len(flags)} flagged drop evaluations, see flags.csv", file=sys.stderr)
        if args.strict:
            return 2
    return 0


def cmd_cdf(args) -> int:
    records = harness.read_records(args.records)
    out = args.out or os.path.dirname(os.path.abspath(args.records))
    os.makedirs(out, exist_ok=True)
    schemes = args.schemes or tuple(dict.fromkeys(r.scheme for r in records))
    for scheme in schemes:
        harness.emit_cdf(records, scheme, harness.cdf_path(out, scheme))
    print(_summary(records, schemes))
    return 0


def cmd_validate(args) -> int:
    results = run_suite(n_trials=args.trials, seed=args.seed)
    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return 0 if all(passed for _, passed, _ in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xlfronthaul", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Monte-Carlo evaluation of the configured schemes")
    run.add_argument("--config", help="INI configuration file (defaults: 64x4 subarrays, M=12, K=8)")
    run.add_argument("--seed", type=int)
    run.add_argument("--drops", type=int)
    run.add_argument("--out")
    run.add_argument("--schemes", type=_schemes,
                     help=f"comma-separated subset of {','.join(harness.SCHEMES)}")
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--strict", action="store_true", help="exit nonzero if any drop is flagged")
    run.set_defaults(func=cmd_run)

    cdf = sub.add_parser("cdf", help="rebuild CDF files from a records CSV")
    cdf.add_argument("records")
    cdf.add_argument("--out")
    cdf.add_argument("--schemes", type=_schemes)
    cdf.set_defaults(func=cmd_cdf)

    val = sub.add_parser("validate", help="invariant suite on tiny random systems")
    val.add_argument("--trials", type=int, default=20)
    val.add_argument("--seed", type=int, default=0)
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
