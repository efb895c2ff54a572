"""Command-line front-end.

Subcommands: ``run`` (execute an experiment from a config file), ``synth``
(write a synthetic CSV dataset), ``stats`` (re-run the comparison pipeline
on persisted results), ``inspect`` (summarize one run file). Exit codes:
0 success, 1 validation/usage error, 2 too many failed runs.
"""

import argparse
import json
import os
import sys

from .datasets import generate_synthetic, save_csv
from .errors import MegpError
from .experiment import (TooManyFailures, dump_json, load_experiment_spec,
                         run_experiment, stats_report)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUN_FAILURES = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="megp",
        description="Multi-population ensemble genetic programming "
                    "experiments and statistics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment from a config file")
    p_run.add_argument("--config", required=True, help="TOML or JSON experiment spec")
    p_run.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override a spec field (dotted keys allowed; repeatable)")
    p_run.add_argument("--out", help="output directory (overrides the config file)")
    p_run.add_argument("--seed", type=int, help="base seed (overrides the config file)")
    p_run.add_argument("--workers", type=int,
                       help="worker processes (overrides the config file)")

    p_synth = sub.add_parser("synth", help="write a synthetic CSV dataset")
    p_synth.add_argument("--out", required=True, help="CSV path to write")
    p_synth.add_argument("--n", type=int, default=600)
    p_synth.add_argument("--features", type=int, default=20)
    p_synth.add_argument("--classes", type=int, default=2)
    p_synth.add_argument("--noise", type=float, default=0.5)
    p_synth.add_argument("--seed", type=int, default=0)

    p_stats = sub.add_parser("stats", help="re-run statistics on persisted results")
    p_stats.add_argument("results_dir", help="experiment output directory")
    p_stats.add_argument("--metric", required=True, help="metric name to compare")
    p_stats.add_argument("--correction", choices=["bonferroni", "bh"], default="bh",
                         help="pairwise p-value correction")
    p_stats.add_argument("--m", type=int, default=None,
                         help="Bonferroni multiplier (default: family size)")
    p_stats.add_argument("--n-boot", type=int, default=10000)
    p_stats.add_argument("--seed", type=int, default=0)
    p_stats.add_argument("--out", help="report path (default: stats_<metric>.json "
                                       "inside the results directory)")

    p_inspect = sub.add_parser("inspect", help="summarize one run result file")
    p_inspect.add_argument("run_file", help="path to a run_*.json file")
    return parser


def _cmd_run(args) -> int:
    overrides = list(args.overrides)
    if args.out is not None:
        overrides.append(f"output_dir={json.dumps(args.out)}")
    if args.seed is not None:
        overrides.append(f"base_seed={args.seed}")
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    spec = load_experiment_spec(args.config, overrides)
    run_experiment(spec, progress=lambda msg: print(msg, file=sys.stderr))
    print(os.path.join(spec.output_dir, "report.json"))
    return EXIT_OK


def _cmd_synth(args) -> int:
    ds = generate_synthetic(n=args.n, f=args.features, classes=args.classes,
                            noise=args.noise, seed=args.seed)
    save_csv(ds, args.out)
    print(args.out)
    return EXIT_OK


def _cmd_stats(args) -> int:
    report = stats_report(args.results_dir, args.metric,
                          correction=args.correction, m=args.m,
                          n_boot=args.n_boot, seed=args.seed)
    out = args.out or os.path.join(args.results_dir,
                                   f"stats_{args.metric}.json")
    dump_json(report, out)
    print(out)
    return EXIT_OK


def _cmd_inspect(args) -> int:
    try:
        with open(args.run_file) as fh:
            run = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read run file: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    required = ("model", "seed", "config", "trajectory", "test_metrics")
    missing = [key for key in required if key not in run]
    if missing:
        print(f"error: run file missing fields: {missing}", file=sys.stderr)
        return EXIT_VALIDATION

    print(f"model: {run['model']}   seed: {run['seed']}")
    print("config:")
    for key, value in sorted(run["config"].items()):
        print(f"  {key} = {value}")
    traj = run["trajectory"]
    print(f"generations: {len(traj)} (last index "
          f"{traj[-1]['generation'] if traj else 'n/a'})")
    if traj:
        series = [rec["best_ft_en_so_far"] if rec["best_ft_en_so_far"] is not None
                  else min(rec["best_ft_iso_so_far"]) for rec in traj]
        print(f"fitness: start {series[0]:.6f}  final {series[-1]:.6f}")
        n_pops = len(traj[0]["best_member_ranks"])
        header = "gen  best_fitness  " + "  ".join(
            f"rank_pop{p}" for p in range(n_pops))
        print("best-ensemble member ranks per generation:")
        print("  " + header)
        for rec, value in zip(traj, series):
            ranks = "  ".join(f"{r:>9d}" for r in rec["best_member_ranks"])
            print(f"  {rec['generation']:>3d}  {value:>12.6f}  {ranks}")
    print("test metrics:")
    for key, value in sorted(run["test_metrics"].items()):
        print(f"  {key} = {value:.6f}")
    print(f"total runtime: {run['total_runtime_seconds']:.3f}s")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "synth": _cmd_synth,
                "stats": _cmd_stats, "inspect": _cmd_inspect}
    try:
        return handlers[args.command](args)
    except TooManyFailures as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILURES
    except MegpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
