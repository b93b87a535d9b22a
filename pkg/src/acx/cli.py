"""Command line interface.

Subcommands: simulate, fit, test, select, study estimation, study selection.
Exit codes: 0 success, 2 configuration error, 3 total replication failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .asymptotics import estimate_sandwich
from .errors import AcxError, ConfigError, EstimationError
from .estimate import fit_qmle
from .experiments import (
    SCENARIOS,
    config_from_json,
    run_estimation_study,
    run_selection_study,
    scenario_config,
)
from .inference import significance_test
from .models import ModelSpec, default_space
from .select import FitCache, fdarx_order_supports, parse_penalty, select_model
from .simulate import Sample

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ALL_FAILED = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acx",
        description="Simulate, estimate, test and select causal time-series "
        "models with exogenous covariates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate one sample from a scenario")
    sim.add_argument("--scenario", default="S0", choices=sorted(SCENARIOS))
    sim.add_argument("--n", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--rep", type=int, default=0, help="replication stream index")
    sim.add_argument("--out", required=True, help="output CSV path")

    fit = sub.add_parser("fit", help="fit the QMLE on a sample CSV")
    fit.add_argument("--data", required=True)
    fit.add_argument("--scenario", default="S0", choices=sorted(SCENARIOS))
    fit.add_argument("--starts", type=int, default=5)
    fit.add_argument("--seed", type=int, default=0)

    test = sub.add_parser("test", help="covariate significance test on a sample CSV")
    test.add_argument("--data", required=True)
    test.add_argument("--scenario", default="S0", choices=sorted(SCENARIOS))
    test.add_argument("--alpha", type=float, default=0.05)
    test.add_argument("--draws", type=int, default=10_000)
    test.add_argument("--starts", type=int, default=5)
    test.add_argument("--seed", type=int, default=0)

    sel = sub.add_parser("select", help="select the covariate order on a sample CSV")
    sel.add_argument("--data", required=True)
    sel.add_argument("--qmax", type=int, default=9)
    sel.add_argument("--penalty", default="bic", help="bic or hqc(c)")
    sel.add_argument("--starts", type=int, default=3)
    sel.add_argument("--seed", type=int, default=0)

    study = sub.add_parser("study", help="run a Monte Carlo study from a config")
    study.add_argument("what", choices=["estimation", "selection"])
    study.add_argument("--config", help="JSON config path; defaults per scenario")
    study.add_argument("--scenario", help="built-in scenario id (without --config)")
    study.add_argument("--reps", type=int, help="override replication count")
    study.add_argument("--seed", type=int, help="override master seed")
    study.add_argument("--threads", type=int, help="worker processes")
    study.add_argument("--sample-sizes", help="comma-separated n values")
    study.add_argument("--out-dir", required=True)

    return parser


def _load_scenario_pieces(scenario_id: str):
    from .experiments import SCENARIOS as reg

    q = reg[scenario_id]["q"]
    spec = ModelSpec.fdar_x(q)
    return spec, default_space(spec), np.asarray(reg[scenario_id]["theta_star"])


def _cmd_simulate(args) -> int:
    from .experiments import _simulate_rep, scenario_config

    cfg = scenario_config(args.scenario, sample_sizes=(args.n,), reps=1, seed=args.seed)
    sample = _simulate_rep(cfg, args.n, args.rep)
    sample.to_csv(args.out)
    print(f"wrote {sample.n} observations to {args.out}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    spec, space, _ = _load_scenario_pieces(args.scenario)
    sample = Sample.from_csv(args.data)
    fit = fit_qmle(spec, space, sample, starts=args.starts, seed=args.seed)
    print(json.dumps(fit.to_json(), indent=1, sort_keys=True))
    return EXIT_OK


def _cmd_test(args) -> int:
    spec, space, _ = _load_scenario_pieces(args.scenario)
    sample = Sample.from_csv(args.data)
    q = spec.orders[0]
    comps = list(range(4, 4 + 2 * q))
    Gamma = np.zeros((len(comps), spec.d))
    for r, i in enumerate(comps):
        Gamma[r, i] = 1.0
    fit = fit_qmle(spec, space, sample, starts=args.starts, seed=args.seed)
    sw = estimate_sandwich(spec, space, sample, fit.theta_hat)
    res = significance_test(
        spec, space, sample, Gamma, np.zeros(len(comps)),
        alpha=args.alpha, draws=args.draws, seed=args.seed, fit=fit, sandwich=sw,
    )
    print(res.verdict())
    print(json.dumps(res.to_json(), indent=1, sort_keys=True))
    return EXIT_OK


def _cmd_select(args) -> int:
    sample = Sample.from_csv(args.data)
    host = ModelSpec.fdar_x(args.qmax)
    space = default_space(host)
    supports = fdarx_order_supports(host, range(args.qmax + 1))
    result = select_model(
        host, space, sample, supports, parse_penalty(args.penalty),
        starts=args.starts, seed=args.seed, cache=FitCache(),
    )
    print(f"selected order q = {result.chosen} by {result.penalty.label}")
    for row in result.table:
        mark = "*" if row.model_index == result.chosen else " "
        print(
            f" {mark} q={row.model_index} dim={row.dim:2d} "
            f"deviance={row.deviance:.4f} criterion={row.criterion:.4f}"
        )
    return EXIT_OK


def _cmd_study(args) -> int:
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
        cfg = config_from_json(doc)
    elif args.scenario:
        cfg = scenario_config(args.scenario)
    else:
        raise ConfigError("study needs --config or --scenario")
    overrides = {}
    if args.reps is not None:
        overrides["reps"] = args.reps
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.sample_sizes:
        overrides["sample_sizes"] = tuple(
            int(v) for v in args.sample_sizes.split(",") if v
        )
    if overrides:
        import dataclasses

        cfg = dataclasses.replace(cfg, **overrides)
    if args.what == "selection" and cfg.selection is None:
        raise ConfigError(f"scenario {cfg.scenario_id} has no selection block")
    runner = run_estimation_study if args.what == "estimation" else run_selection_study
    report = runner(cfg)
    report.write(args.out_dir)
    print(
        f"{args.what} study {cfg.scenario_id}: {len(report.cells)} cells, "
        f"{report.wall_clock_seconds:.1f}s -> {args.out_dir}"
    )
    dead = [c for c in report.cells if c["n_fail"] >= c["reps"]]
    if dead:
        first = dead[0]["failures"][0]["error"] if dead[0]["failures"] else "unknown"
        print(
            f"replication failure: every replication failed in "
            f"{len(dead)} cell(s); first error: {first}",
            file=sys.stderr,
        )
        return EXIT_ALL_FAILED
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "fit": _cmd_fit,
        "test": _cmd_test,
        "select": _cmd_select,
        "study": _cmd_study,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except EstimationError as err:
        print(f"replication failure: {err}", file=sys.stderr)
        return EXIT_ALL_FAILED
    except AcxError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
