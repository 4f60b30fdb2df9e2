"""Command-line interface.

Subcommands:

* ``solve``      -- one fixed-point solve at the configured penalties
* ``select``     -- run the sparsity-guided penalty selection
* ``check``      -- evaluate the step-weight convergence condition
* ``experiment`` -- reproduce one of the built-in experiments end to end
* ``sweep``      -- sensitivity sweep over lambda0 or epsilon

Configuration is JSON (see README for the schema); ``--seed`` and
``--matrix`` override the corresponding config entries.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .experiments import (ExperimentConfig, default_fppa, run_experiment,
                          sensitivity_sweep)
from .solver import FppaParams, check_convergence_condition


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "matrix", None) is not None:
        cfg.matrix_path = args.matrix
    return cfg


def cmd_solve(args):
    from .experiments import build_problem
    from .selector import count_sparsity

    cfg = _load_config(args)
    problem, _ = build_problem(cfg)
    params = default_fppa(cfg.experiment, problem.sigma, cfg.fppa)
    lambdas = np.asarray(cfg.lambda0, dtype=float)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "solver_trace.csv" if args.trace else None
    res = problem.solve(lambdas, params, trace_path=trace_path,
                        history_every=50 if args.trace else 0)
    payload = {
        "experiment": cfg.experiment,
        "lambdas": [float(v) for v in lambdas],
        "iterations": res.iterations,
        "converged": bool(res.converged),
        "fixed_point_residuals": [float(v) for v in res.fixed_point_residuals],
        "levels": [int(v) for v in count_sparsity(res.w, problem.stack.layout)],
        "objective": problem.objective(lambdas, problem.recover(res.w)),
    }
    with open(out / "solve.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(json.dumps(payload, indent=2))
    return 0


def cmd_select(args):
    cfg = _load_config(args)
    outcome = run_experiment(cfg, out_dir=args.out)
    print(json.dumps(outcome.results, indent=2, sort_keys=True))
    return 0


def cmd_check(args):
    if args.config:
        cfg = _load_config(args)
        params = default_fppa(cfg.experiment, args.sigma, cfg.fppa)
    else:
        params = FppaParams(alpha=args.alpha, rho=args.rho, beta=args.beta,
                            theta=args.theta)
    report = check_convergence_condition(params, args.sigma)
    payload = {"satisfied": bool(report.satisfied), "margin": float(report.margin),
               "contraction": float(report.contraction), "ratio": float(report.ratio)}
    print(json.dumps(payload, indent=2))
    return 0 if report.satisfied else 1


def cmd_experiment(args):
    cfg = _load_config(args)
    if args.kind is not None:
        cfg.experiment = args.kind
    outcome = run_experiment(cfg, out_dir=args.out)
    print(json.dumps(outcome.results, indent=2, sort_keys=True))
    return 0


def cmd_sweep(args):
    with open(args.config) as fh:
        payload = json.load(fh)
    vary = payload.pop("vary", None)
    if not vary:
        raise SystemExit("sweep config needs a 'vary' entry")
    cfg = ExperimentConfig.from_dict(payload)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.matrix is not None:
        cfg.matrix_path = args.matrix
    rows = sensitivity_sweep(cfg, vary, out_dir=args.out)
    print(json.dumps(rows, indent=2))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sparselect",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, need_out=True):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--matrix", default=None, help="external matrix file (csv or .bin)")
        if need_out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("solve", help="one fixed-point solve")
    add_common(p)
    p.add_argument("--trace", action="store_true", help="write per-iteration CSV")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("select", help="run the penalty selection")
    add_common(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("check", help="evaluate the convergence condition")
    p.add_argument("--config", default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--sigma", type=float, required=True,
                   help="operator norm of the lift matrix")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("experiment", help="run a built-in experiment")
    p.add_argument("kind", nargs="?", default=None,
                   help="experiment kind (defaults to the config entry)")
    add_common(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("sweep", help="sensitivity sweep")
    add_common(p)
    p.set_defaults(func=cmd_sweep)

    args = parser.parse_args(argv)
    if args.command == "check" and args.config is None:
        missing = [k for k in ("alpha", "rho", "beta") if getattr(args, k) is None]
        if missing:
            parser.error(f"check needs --config or --{'/--'.join(missing)}")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
