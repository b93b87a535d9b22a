"""Monte Carlo study harness: estimation/test studies and order-selection studies.

A study is driven by a JSON config naming a built-in scenario (or a custom
model), sample sizes, a replication count and a master seed.  Replications
are independent streams of a counter-based generator, so results do not
depend on execution order or the number of worker processes.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AcxError, ConfigError, EstimationError, NumericsError, SingularMatrixError
from .estimate import fit_qmle
from .asymptotics import estimate_sandwich
from .inference import significance_test
from .models import ModelSpec, ParamSpace, default_space, space_from_json
from .select import FitCache, fit_collection, fdarx_order_supports, parse_penalty, select_from_fits
from .simulate import NoiseConfig, Sample, simulate_covariates, simulate_response

COVARIATE_AR = (0.5, 0.5)

# Built-in scenarios for the fdarx family: the first four drive estimation
# and the covariate-significance test, the starred two drive order selection
# (true order 2).
SCENARIOS: dict[str, dict] = {
    "S0": {
        "q": 1,
        "theta_star": (0.15, -0.2, 0.4, 0.3, 0.0, 0.0),
        "kind": "null",
    },
    "S1": {
        "q": 1,
        "theta_star": (0.15, -0.2, 0.4, 0.3, 0.08, 0.0),
        "kind": "alternative",
    },
    "S0p": {
        "q": 1,
        "theta_star": (1.0, 0.4, 0.5, 0.2, 0.0, 0.0),
        "kind": "null",
    },
    "S1p": {
        "q": 1,
        "theta_star": (1.0, 0.4, 0.5, 0.2, 0.07, 0.07),
        "kind": "alternative",
    },
    "Sstar1": {
        "q": 2,
        "theta_star": (0.6, 0.45, 0.5, 0.15, 1.0, 0.7, 0.6, 0.35),
        "kind": "selection",
    },
    "Sstar2": {
        "q": 2,
        "theta_star": (0.15, 0.4, 0.5, 0.2, 0.1, 0.1, 0.03, 0.3),
        "kind": "selection",
    },
}

# substream offsets within a replication
_SUB_COV = 0
_SUB_XI = 1
_SUB_FIT = 2
_SUB_MC = 3
_STRIDE = 8


@dataclass(frozen=True)
class TestSpec:
    """Which components to test for nullity, and how."""

    components: tuple[int, ...]
    alpha: float = 0.05
    draws: int = 10_000

    def gamma(self, d: int) -> np.ndarray:
        G = np.zeros((len(self.components), d))
        for r, i in enumerate(self.components):
            G[r, i] = 1.0
        return G


@dataclass(frozen=True)
class SelectionSpec:
    q_max: int = 9
    q_true: int = 2
    penalties: tuple[str, ...] = ("bic", "hqc(2)", "hqc(3.5)", "hqc(5)")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str
    spec: ModelSpec
    space: ParamSpace
    theta_star: np.ndarray
    sample_sizes: tuple[int, ...]
    reps: int
    seed: int
    cov_phi0: float = COVARIATE_AR[0]
    cov_phi1: float = COVARIATE_AR[1]
    burn_in: int = 500
    starts: int = 3
    noise_law: str = "normal"
    test: TestSpec | None = None
    selection: SelectionSpec | None = None
    threads: int = 1

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if not self.sample_sizes:
            raise ConfigError("sample_sizes must be non-empty")
        if any(n < 10 for n in self.sample_sizes):
            raise ConfigError("sample sizes below 10 are not supported")
        ok = self.theta_star.shape == (self.spec.d,)
        if not ok:
            raise ConfigError(
                f"theta_star has length {self.theta_star.size}, model needs {self.spec.d}"
            )



def scenario_config(
    scenario_id: str,
    sample_sizes=(500, 1000),
    reps=200,
    seed=0,
    starts=3,
    threads=1,
    alpha=0.05,
    draws=10_000,
    burn_in=500,
    with_test=True,
) -> ScenarioConfig:
    """Config for a built-in scenario with its standard test/selection block."""
    if scenario_id not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario_id!r}")
    entry = SCENARIOS[scenario_id]
    q = entry["q"]
    spec = ModelSpec.fdar_x(q)
    test = None
    selection = None
    if entry["kind"] == "selection":
        selection = SelectionSpec(q_true=q)
    elif with_test:
        comps = tuple(range(4, 4 + 2 * q))
        test = TestSpec(components=comps, alpha=alpha, draws=draws)
    return ScenarioConfig(
        scenario_id=scenario_id,
        spec=spec,
        space=default_space(spec),
        theta_star=np.asarray(entry["theta_star"], dtype=float),
        sample_sizes=tuple(int(n) for n in sample_sizes),
        reps=int(reps),
        seed=int(seed),
        burn_in=int(burn_in),
        starts=int(starts),
        test=test,
        selection=selection,
        threads=int(threads),
    )


def config_from_json(doc: dict) -> ScenarioConfig:
    """Build a config from a JSON document (built-in or custom scenario)."""
    try:
        common = dict(
            sample_sizes=tuple(int(n) for n in doc.get("sample_sizes", (500, 1000))),
            reps=int(doc.get("reps", 200)),
            seed=int(doc.get("seed", 0)),
            starts=int(doc.get("starts", 3)),
            threads=int(doc.get("threads", 1)),
            burn_in=int(doc.get("burn_in", 500)),
        )
        if "scenario" in doc:
            tdoc = doc.get("test", {})
            if not isinstance(tdoc, dict):
                tdoc = {}
            cfg = scenario_config(
                doc["scenario"],
                alpha=float(tdoc.get("alpha", 0.05)),
                draws=int(tdoc.get("draws", 10_000)),
                with_test=bool(doc.get("test", True)),
                **common,
            )
            if "selection" in doc and cfg.selection is not None:
                sel = doc["selection"]
                cfg = _replace_selection(
                    cfg,
                    SelectionSpec(
                        q_max=int(sel.get("q_max", 9)),
                        q_true=cfg.selection.q_true,
                        penalties=tuple(sel.get("penalties", cfg.selection.penalties)),
                    ),
                )
            return cfg
        spec = ModelSpec.from_dict(doc["model"])
        if "lo" in doc:
            _, space = space_from_json({**doc["model"], **doc})
        else:
            space = default_space(spec)
        test = None
        if isinstance(doc.get("test"), dict) and "components" in doc["test"]:
            t = doc["test"]
            test = TestSpec(
                components=tuple(int(i) for i in t["components"]),
                alpha=float(t.get("alpha", 0.05)),
                draws=int(t.get("draws", 10_000)),
            )
        return ScenarioConfig(
            scenario_id=str(doc.get("scenario_id", "custom")),
            spec=spec,
            space=space,
            theta_star=np.asarray(doc["theta_star"], dtype=float),
            cov_phi0=float(doc.get("cov_phi0", COVARIATE_AR[0])),
            cov_phi1=float(doc.get("cov_phi1", COVARIATE_AR[1])),
            noise_law=str(doc.get("noise_law", "normal")),
            test=test,
            **common,
        )
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"bad config: {err}") from err


def _replace_selection(cfg: ScenarioConfig, sel: SelectionSpec) -> ScenarioConfig:
    import dataclasses

    return dataclasses.replace(cfg, selection=sel)


@dataclass
class ExperimentReport:
    """Aggregated study output; every cell traces back to (seed, rep)."""

    kind: str
    master_seed: int
    cells: list[dict] = field(default_factory=list)
    estimates: dict = field(default_factory=dict)
    config_echo: dict = field(default_factory=dict)
    wall_clock_seconds: float = 0.0

    def to_json_dict(self) -> dict:
        # wall clock deliberately excluded: reports are byte-reproducible
        return {
            "kind": self.kind,
            "master_seed": self.master_seed,
            "cells": self.cells,
            "config": self.config_echo,
        }

    def write(self, out_dir) -> None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        if self.kind == "estimation":
            self._write_table1(os.path.join(out_dir, "table1.csv"))
            for (scenario, n), rows in sorted(self.estimates.items()):
                path = os.path.join(out_dir, f"estimates_{scenario}_{n}.csv")
                with open(path, "w", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(["rep", "component", "estimate", "truth"])
                    writer.writerows(rows)
        else:
            self._write_selection(os.path.join(out_dir, "selection.csv"))

    def _write_table1(self, path) -> None:
        names = self.cells[0]["components"] if self.cells else []
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["scenario", "n", "reps", "n_fail", "rejection_rate"]
                + [f"mean_{c}" for c in names]
                + [f"rmse_{c}" for c in names]
            )
            for cell in self.cells:
                rate = cell.get("rejection_rate")
                mean = cell["mean"] or {}
                rmse = cell["rmse"] or {}
                writer.writerow(
                    [
                        cell["scenario"],
                        cell["n"],
                        cell["reps"],
                        cell["n_fail"],
                        "" if rate is None else repr(float(rate)),
                    ]
                    + ["" if c not in mean else repr(float(mean[c])) for c in names]
                    + ["" if c not in rmse else repr(float(rmse[c])) for c in names]
                )

    def _write_selection(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "penalty", "avg_order", "freq"])
            for cell in self.cells:
                writer.writerow(
                    [
                        cell["n"],
                        cell["penalty"],
                        "" if cell["avg_order"] is None else repr(float(cell["avg_order"])),
                        "" if cell["freq"] is None else repr(float(cell["freq"])),
                    ]
                )


def _rep_seed(master_seed: int, rep: int, sub: int) -> int:
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(rep, sub))
    return int(ss.generate_state(1, np.uint64)[0])


def _simulate_rep(cfg: ScenarioConfig, n: int, rep: int) -> Sample:
    base = rep * _STRIDE
    cov_noise = NoiseConfig("normal", cfg.seed, base + _SUB_COV)
    x = simulate_covariates(n + cfg.burn_in, cfg.cov_phi0, cfg.cov_phi1, cov_noise)
    xi = NoiseConfig(cfg.noise_law, cfg.seed, base + _SUB_XI)
    return simulate_response(
        cfg.spec, cfg.theta_star, x[:, None], n, burn_in=cfg.burn_in, noise=xi
    )


def _estimation_rep(args) -> dict:
    cfg, n, rep = args
    out: dict = {"rep": rep}
    try:
        sample = _simulate_rep(cfg, n, rep)
        fit = fit_qmle(
            cfg.spec, cfg.space, sample,
            starts=cfg.starts, seed=_rep_seed(cfg.seed, rep, _SUB_FIT),
        )
        out["theta_hat"] = [float(v) for v in fit.theta_hat]
        out["converged"] = fit.converged
        if cfg.test is not None:
            sw = estimate_sandwich(cfg.spec, cfg.space, sample, fit.theta_hat)
            res = significance_test(
                cfg.spec, cfg.space, sample,
                cfg.test.gamma(cfg.spec.d), np.zeros(len(cfg.test.components)),
                alpha=cfg.test.alpha, draws=cfg.test.draws,
                seed=_rep_seed(cfg.seed, rep, _SUB_MC), fit=fit, sandwich=sw,
            )
            out["reject"] = bool(res.reject)
            out["W_n"] = res.W_n
    except (AcxError, EstimationError, NumericsError, SingularMatrixError) as err:
        out["error"] = f"{type(err).__name__}: {err}"
    return out


def _selection_rep(args) -> dict:
    cfg, n, rep = args
    out: dict = {"rep": rep}
    sel = cfg.selection
    try:
        sample = _simulate_rep(cfg, n, rep)
        host = ModelSpec.fdar_x(sel.q_max)
        space = default_space(host)
        supports = fdarx_order_supports(host, range(sel.q_max + 1))
        fits = fit_collection(
            host, space, sample, supports,
            starts=cfg.starts, seed=_rep_seed(cfg.seed, rep, _SUB_FIT),
            cache=FitCache(),
        )
        orders = {}
        for label in sel.penalties:
            res = select_from_fits(fits, parse_penalty(label), sample.n)
            orders[label] = res.chosen  # chosen index == order q by construction
        out["orders"] = orders
    except (AcxError, EstimationError, NumericsError, SingularMatrixError) as err:
        out["error"] = f"{type(err).__name__}: {err}"
    return out


def _run_reps(worker, cfg: ScenarioConfig, n: int) -> list[dict]:
    tasks = [(cfg, n, rep) for rep in range(cfg.reps)]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(worker, tasks, chunksize=4))
    else:
        results = [worker(t) for t in tasks]
    return sorted(results, key=lambda r: r["rep"])


def run_estimation_study(cfg: ScenarioConfig) -> ExperimentReport:
    """Per (scenario, n): component means and RMSEs, plus the test rejection rate."""
    t0 = time.perf_counter()
    report = ExperimentReport(
        kind="estimation", master_seed=cfg.seed, config_echo=_echo(cfg)
    )
    names = list(cfg.spec.layout)
    for n in cfg.sample_sizes:
        results = _run_reps(_estimation_rep, cfg, n)
        good = [r for r in results if "error" not in r]
        failures = [
            {"rep": r["rep"], "error": r["error"]} for r in results if "error" in r
        ]
        cell = {
            "scenario": cfg.scenario_id,
            "n": n,
            "reps": cfg.reps,
            "n_fail": len(failures),
            "failures": failures,
            "components": names,
            "mean": None,
            "rmse": None,
            "rejection_rate": None,
        }
        if good:
            thetas = np.array([r["theta_hat"] for r in good])
            mean = thetas.mean(axis=0)
            rmse = np.sqrt(np.mean((thetas - cfg.theta_star) ** 2, axis=0))
            cell["mean"] = {c: float(mean[i]) for i, c in enumerate(names)}
            cell["rmse"] = {c: float(rmse[i]) for i, c in enumerate(names)}
            if cfg.test is not None:
                flags = [r["reject"] for r in good if "reject" in r]
                cell["rejection_rate"] = float(np.mean(flags)) if flags else None
        report.cells.append(cell)
        report.estimates[(cfg.scenario_id, n)] = [
            (r["rep"], names[i], repr(float(r["theta_hat"][i])), repr(float(cfg.theta_star[i])))
            for r in good
            for i in range(len(names))
        ]
    report.wall_clock_seconds = time.perf_counter() - t0
    return report


def run_selection_study(cfg: ScenarioConfig) -> ExperimentReport:
    """Per (n, penalty): average selected order and true-order frequency."""
    if cfg.selection is None:
        raise ConfigError("config has no selection block")
    t0 = time.perf_counter()
    report = ExperimentReport(
        kind="selection", master_seed=cfg.seed, config_echo=_echo(cfg)
    )
    sel = cfg.selection
    for n in cfg.sample_sizes:
        results = _run_reps(_selection_rep, cfg, n)
        good = [r for r in results if "error" not in r]
        failures = [
            {"rep": r["rep"], "error": r["error"]} for r in results if "error" in r
        ]
        for label in sel.penalties:
            cell = {
                "scenario": cfg.scenario_id,
                "n": n,
                "penalty": label,
                "reps": cfg.reps,
                "n_fail": len(failures),
                "failures": failures,
                "avg_order": None,
                "freq": None,
            }
            if good:
                chosen = np.array([r["orders"][label] for r in good])
                cell["avg_order"] = float(np.mean(chosen))
                cell["freq"] = float(np.mean(chosen == sel.q_true))
            report.cells.append(cell)
    report.wall_clock_seconds = time.perf_counter() - t0
    return report


def _echo(cfg: ScenarioConfig) -> dict:
    return {
        "scenario": cfg.scenario_id,
        "model": cfg.spec.to_dict(),
        "theta_star": [float(v) for v in cfg.theta_star],
        "sample_sizes": list(cfg.sample_sizes),
        "reps": cfg.reps,
        "seed": cfg.seed,
        "starts": cfg.starts,
        "burn_in": cfg.burn_in,
        "noise_law": cfg.noise_law,
        "cov_ar": [cfg.cov_phi0, cfg.cov_phi1],
        "test": None
        if cfg.test is None
        else {
            "components": list(cfg.test.components),
            "alpha": cfg.test.alpha,
            "draws": cfg.test.draws,
        },
        "selection": None
        if cfg.selection is None
        else {
            "q_max": cfg.selection.q_max,
            "q_true": cfg.selection.q_true,
            "penalties": list(cfg.selection.penalties),
        },
    }
