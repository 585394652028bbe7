"""``tabular-ail`` command line: gen-env, run, plot-data, check.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .checks import run_invariant_suite
from .envs import ResetCliffSpec, build_random_mdp, build_reset_cliff, reset_cliff_expert
from .mdp import ConfigurationError, TabularMdp, evaluate_policy_direct, value_iteration


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tabular-ail", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-env", help="write an environment as a JSON MDP file")
    gen.add_argument("kind", choices=["reset-cliff", "random"])
    gen.add_argument("--states", type=int, required=True)
    gen.add_argument("--actions", type=int, required=True)
    gen.add_argument("--horizon", type=int, required=True)
    gen.add_argument("--m", type=int, default=None, help="expert trajectory count (reset-cliff only)")
    gen.add_argument("--seed", type=int, default=None, help="RNG seed (random only)")
    gen.add_argument("--out", "-o", default="env.json")

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    run.add_argument("--jobs", type=int, default=1, help="parallel cells; TABULAR_AIL_JOBS overrides")

    plot = sub.add_parser("plot-data", help="turn a results CSV into a gnuplot table")
    plot.add_argument("csv")
    plot.add_argument("--out", "-o", default=None)

    check = sub.add_parser("check", help="run the invariant suite on an MDP file")
    check.add_argument("mdp")
    check.add_argument("--probes", type=int, default=20)
    check.add_argument("--seed", type=int, default=0)
    return parser


def cmd_gen_env(args, parser) -> int:
    if args.kind == "reset-cliff":
        if args.m is None:
            parser.error("gen-env reset-cliff requires --m")
        spec = ResetCliffSpec(args.states, args.actions, args.horizon, args.m)
        mdp = build_reset_cliff(spec)
        value = evaluate_policy_direct(mdp, reset_cliff_expert(spec))
    else:
        if args.seed is None:
            parser.error("gen-env random requires --seed")
        if min(args.states, args.actions, args.horizon) < 1:
            parser.error("dimensions must be positive")
        mdp = build_random_mdp(args.states, args.actions, args.horizon, args.seed)
        value = value_iteration(mdp)[1]
    mdp.save(args.out)
    print(f"wrote {args.out}")
    print(f"expert value: {value:.10g}")
    return 0


def cmd_run(args) -> int:
    cfg = harness.load_config(args.config)
    jobs = harness.resolve_jobs(args.jobs)
    out_dir = args.out if args.out is not None else Path(args.config).parent / cfg.output_dir
    rows, timings = harness.run_experiment(cfg, jobs)
    paths = harness.write_outputs(out_dir, rows, timings, harness.cells(cfg))
    failed = sum(1 for r in rows if r["error"])
    print(f"{len(rows)} cells, {failed} failed")
    for path in paths.values():
        print(f"wrote {path}")
    return 1 if failed else 0


def cmd_plot_data(args) -> int:
    with open(args.csv) as fh:
        table = harness.plot_data(fh.read())
    if args.out:
        Path(args.out).write_text(table)
    else:
        sys.stdout.write(table)
    return 0


def cmd_check(args) -> int:
    mdp = TabularMdp.load(args.mdp)
    report = run_invariant_suite(mdp, probes=args.probes, rng_seed=args.seed)
    for line in report.lines():
        print(line)
    return 0 if report.ok else 1


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen-env":
            return cmd_gen_env(args, parser)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "plot-data":
            return cmd_plot_data(args)
        return cmd_check(args)
    except ConfigurationError as exc:
        print(f"tabular-ail: configuration error: {exc}", file=sys.stderr)
        return 2
    except harness.PlotDataError as exc:
        print(f"tabular-ail: parse error: {exc}", file=sys.stderr)
        return 1
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"tabular-ail: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
