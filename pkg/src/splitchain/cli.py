"""Command-line entry points.

Subcommands: ``params`` (committee bound tables), ``run`` (simulate a
scenario, writing line-delimited metrics and a chain dump), ``audit``
(independent replay of a dump), ``mc`` (Monte-Carlo bound experiments),
and ``report`` (figures + delimited summary from metrics files).

Exit codes: 0 success, 2 configuration errors, 3 assertion/audit/bound
failures, 4 I/O errors.  Every config field can be overridden by an
environment variable prefixed SPLITCHAIN_ (e.g. SPLITCHAIN_SEED=7).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .audit import audit_dump_file
from .bounds import PopulationParams, committee_bounds, min_mean_committee
from .chaindump import write_dump
from .config import SimConfig, apply_overrides, load_config
from .errors import ConfigError, InfeasibleConfig, SimulationInvariantError, StalledRound
from .experiments import EXPERIMENTS, run_experiment
from .simnet import run_simulation

ENV_PREFIX = "SPLITCHAIN_"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSERTION = 3
EXIT_IO = 4


def _env_overrides() -> dict[str, str]:
    out = {}
    for key, value in os.environ.items():
        if key.startswith(ENV_PREFIX):
            out[key[len(ENV_PREFIX):].lower()] = value
    return out


def cmd_params(args) -> int:
    try:
        if args.search:
            mean = min_mean_committee(args.alpha, args.gamma, args.fanout,
                                      citizens=args.citizens, kappa=args.kappa)
            print(f"minimum mean committee size: {mean}")
            params = PopulationParams(
                citizens=args.citizens, alpha=args.alpha, gamma=args.gamma,
                fanout=args.fanout, mean_committee=float(mean), kappa=args.kappa)
        else:
            params = PopulationParams(
                citizens=args.citizens, alpha=args.alpha, gamma=args.gamma,
                fanout=args.fanout, mean_committee=args.mean, kappa=args.kappa)
        bounds = committee_bounds(params, eps_c=args.eps_c)
    except InfeasibleConfig as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"alpha={args.alpha} gamma={args.gamma} fanout={args.fanout} "
          f"mean={params.mean_committee:.0f} kappa={args.kappa}")
    print(f"committee size bounds: [{bounds.n_star}, {bounds.n_tilde}]")
    print(f"good citizens >= {bounds.n_g_star}")
    print(f"bad citizens  <= {bounds.n_b_tilde}")
    print(f"gap           >= {bounds.gap_min:.2f}")
    print("slacks: " + " ".join(f"{k}={v:.5g}" for k, v in bounds.epsilons.items()))
    print("failure probabilities: " +
          " ".join(f"{k}={v:.3g}" for k, v in bounds.failure_probs.items()))
    print(f"max failure probability {bounds.max_failure:.3g} "
          f"(budget 2^-{args.kappa})")
    return EXIT_OK


def cmd_run(args) -> int:
    overrides = _env_overrides()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.blocks is not None:
        overrides["blocks"] = str(args.blocks)
    try:
        if args.config:
            cfg = load_config(args.config, overrides)
        else:
            cfg = apply_overrides(SimConfig(), overrides)
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        os.makedirs(args.out_dir, exist_ok=True)
        metrics_path = os.path.join(args.out_dir, "metrics.jsonl")
        dump_path = os.path.join(args.out_dir, "chain.dump")
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        report = run_simulation(cfg)
    except (StalledRound, SimulationInvariantError) as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_ASSERTION
    try:
        with open(metrics_path, "w", encoding="utf-8") as fh:
            for rec in report.records:
                fh.write(rec.to_line() + "\n")
        write_dump(report.store, dump_path)
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    summary = {
        "blocks": len(report.records),
        "committed_txs": report.total_committed,
        "injected_txs": report.total_injected,
        "empty_fraction": round(report.empty_fraction, 4),
        "mean_pools": round(report.mean_pools, 3),
        "sim_time_s": round(report.sim_time_us / 1e6, 3),
        "max_commit_delay": report.max_commit_delay,
        "metrics": metrics_path,
        "dump": dump_path,
    }
    print(json.dumps(summary, separators=(",", ":")))
    return EXIT_OK


def cmd_audit(args) -> int:
    try:
        result = audit_dump_file(args.dump)
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    verdict = {"ok": result.ok, "height": result.height,
               "blocks_checked": result.blocks_checked,
               "tx_checked": result.tx_checked}
    if not result.ok:
        verdict["failure"] = result.failure
    print(json.dumps(verdict, separators=(",", ":")))
    return EXIT_OK if result.ok else EXIT_ASSERTION


def cmd_mc(args) -> int:
    try:
        result = run_experiment(args.experiment, args.trials, args.seed)
    except KeyError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    print(result.line())
    return EXIT_OK if result.passed else EXIT_ASSERTION


def cmd_report(args) -> int:
    from .report import render_report
    try:
        written = render_report(args.metrics, args.out_dir, labels=args.label)
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in written:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitchain",
        description="Split-trust committee blockchain: bounds, simulation, "
                    "audit, and Monte-Carlo experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("params", help="committee bound calculator")
    p.add_argument("--alpha", type=float, default=0.75)
    p.add_argument("--gamma", type=float, default=0.8)
    p.add_argument("--fanout", type=int, default=25)
    p.add_argument("--citizens", type=int, default=10 ** 6)
    p.add_argument("--mean", type=float, default=2000.0)
    p.add_argument("--kappa", type=int, default=30)
    p.add_argument("--eps-c", type=float, default=None)
    p.add_argument("--search", action="store_true",
                   help="search the minimum feasible mean committee size")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("run", help="run a simulation scenario")
    p.add_argument("--config", help="scenario config path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--blocks", type=int, default=None)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("audit", help="independently audit a chain dump")
    p.add_argument("dump", help="chain dump path")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("mc", help="Monte-Carlo bound experiments")
    p.add_argument("--experiment", required=True, choices=sorted(EXPERIMENTS))
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("report", help="render figures and a summary table "
                                      "from metrics files")
    p.add_argument("metrics", nargs="+", help="metrics.jsonl files")
    p.add_argument("--label", action="append", default=None,
                   help="label per metrics file (repeatable)")
    p.add_argument("--out-dir", default="report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
