"""Command-line surface.

Subcommands:
  simulate <config.json>      run replications, write payoff CSV / aggregate
  sweep <sweep.json>          run a parameter sweep to one CSV
  verify <config.json>        run forensics; nonzero exit if any bound fails
  calc-inertia --alpha A      sufficient (J, I) for the inertial protocol
  threshold --gamma G         selfish-mining profitability threshold
  revenue --alpha A --gamma G stationary selfish-mining revenue
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (
    ConfigError,
    aggregate,
    load_config,
    load_sweep,
    run_experiment,
    run_sweep,
    write_aggregate_json,
    write_payoff_csv,
    write_sweep_csv,
    write_verify_json,
)
from .walks import InfeasibleError, selfish_revenue, selfish_threshold, sufficient_inertia


def _cmd_simulate(args) -> int:
    config = load_config(args.config)
    results = run_experiment(config, workers=args.workers)
    csv_path = config.outputs.get("csv")
    if csv_path:
        write_payoff_csv(results, csv_path)
    agg_path = config.outputs.get("aggregate")
    if agg_path:
        write_aggregate_json(config, results, agg_path)
    for row in aggregate(results):
        print(
            f"miner {row['miner']}: share {row['mean_share']:.6f}"
            f" +- {1.96 * row['se']:.6f} (95%)"
        )
    return 0


def _cmd_sweep(args) -> int:
    spec = load_sweep(args.sweep)
    rows = run_sweep(spec, workers=args.workers)
    out = spec.template.outputs.get("csv") or args.out
    if out:
        write_sweep_csv(rows, out)
    for row in rows:
        print(json.dumps(row))
    return 0


def _cmd_verify(args) -> int:
    config = load_config(args.config)
    results = run_experiment(config, forensic=True, workers=args.workers)
    report_path = config.outputs.get("report")
    if report_path:
        write_verify_json(config, results, report_path)
    ok = True
    for r in results:
        rep = r.report
        seed_ok = rep["pass_S"] and rep["pass_K"] and all(row["ok"] for row in rep["lag_histogram"])
        ok = ok and seed_ok
        print(
            f"seed {r.seed}: mean_S {rep['mean_S']:.6f} mean_K {rep['mean_K']:.6f}"
            f" bound {rep['bound']:.6f} {'pass' if seed_ok else 'FAIL'}"
        )
    print("verify:", "pass" if ok else "FAIL")
    return 0 if ok else 1


def _cmd_calc_inertia(args) -> int:
    bound = sufficient_inertia(args.alpha, margin=args.margin)
    print(json.dumps(bound.to_json()))
    return 0


def _cmd_threshold(args) -> int:
    print(json.dumps({"gamma": args.gamma, "threshold": selfish_threshold(args.gamma)}))
    return 0


def _cmd_revenue(args) -> int:
    rev = selfish_revenue(args.alpha, args.gamma)
    print(json.dumps({"alpha": args.alpha, "gamma": args.gamma, "revenue": rev}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="inertial-mining", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="run a parameter sweep")
    p.add_argument("sweep")
    p.add_argument("--out", default=None, help="CSV output path")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("verify", help="forensic bound checks over replications")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("calc-inertia", help="sufficient (J, I) for a power share")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--margin", type=float, default=0.0)
    p.set_defaults(func=_cmd_calc_inertia)

    p = sub.add_parser("threshold", help="selfish-mining profitability threshold")
    p.add_argument("--gamma", type=float, required=True)
    p.set_defaults(func=_cmd_threshold)

    p = sub.add_parser("revenue", help="stationary selfish-mining revenue")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.set_defaults(func=_cmd_revenue)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InfeasibleError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
