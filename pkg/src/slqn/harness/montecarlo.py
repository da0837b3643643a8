"""Monte Carlo comparison of the iterated filters on a builtin scenario."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..bridge import certify_exact_qn
from ..filters import Correction, FilterKind, map_cost, run_filter
from .config import RunConfig
from .scenarios import get_scenario

CSV_COLUMNS = ("run_id", "filter", "iterations", "final_error", "converged_reason", "cost_final")

_DISPATCH = {
    "iekf": (FilterKind.IEKF, Correction.ZERO, {}),
    "qniekf": (FilterKind.QNIEKF, Correction.ZERO, {}),
    "qniekf_exact": (FilterKind.QNIEKF, Correction.EXACT, {}),
    "iplf": (FilterKind.IPLF, Correction.ZERO, {}),
    "iplf_prior": (FilterKind.IPLF, Correction.ZERO, {"gain": "prior"}),
    "iukf": (FilterKind.IUKF, Correction.ZERO, {}),
}


def run_rng(seed: int, run_id: int) -> np.random.Generator:
    """Independent stream for one run, derived from ``(seed, run_id)``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run_id,)))


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class RunReport:
    config: dict
    summary: dict
    rows: list
    runs: list
    equivalence: dict = None

    def to_dict(self) -> dict:
        out = {"config": self.config, "summary": self.summary, "runs": self.runs}
        if self.equivalence is not None:
            out["equivalence"] = self.equivalence
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow(
                [row["run_id"], row["filter"], row["iterations"], fmt(row["final_error"]),
                 row["converged_reason"], fmt(row["cost_final"])]
            )
        return buf.getvalue()

    @property
    def all_diverged(self) -> bool:
        return all(row["converged_reason"] == "Diverged" for row in self.rows)


def _one_run(config: RunConfig, run_id: int, equivalence: bool):
    scenario = get_scenario(config.scenario)
    params = scenario.params(config.params)
    x_true, problem = scenario.sample(params, run_rng(config.seed, run_id))
    iter_cfg = config.iteration_config()
    rows, means = [], {}
    for name in config.filters:
        kind, correction, overrides = _DISPATCH[name]
        cfg = dataclasses.replace(iter_cfg, **overrides) if overrides else iter_cfg
        trace = run_filter(problem, cfg, kind, correction)
        mean = trace.final.mean
        try:
            cost = map_cost(problem, mean)
        except Exception:  # noqa: BLE001 - report, do not abort the batch
            cost = math.nan
        rows.append(
            {
                "run_id": run_id,
                "filter": name,
                "iterations": trace.iterations,
                "final_error": float(np.linalg.norm(mean - x_true)),
                "converged_reason": trace.reason.value,
                "cost_final": cost,
            }
        )
        means[name] = [float(v) for v in mean]
    run = {"run_id": run_id, "x_true": [float(v) for v in x_true], "posterior_means": means}
    if scenario.exact_posterior is not None:
        exact = scenario.exact_posterior(params, problem.observation)
        run["exact_mean"] = [float(v) for v in exact.mean]
    cert = None
    if equivalence:
        cert = certify_exact_qn(problem, iter_cfg, "iplf")
    return rows, run, cert


def _summarize(config: RunConfig, rows) -> dict:
    summary = {}
    for name in config.filters:
        mine = [r for r in rows if r["filter"] == name]
        ok = [r for r in mine if r["converged_reason"] != "Diverged"]
        errs = np.array([r["final_error"] for r in ok])
        summary[name] = {
            "runs": len(mine),
            "divergence_count": len(mine) - len(ok),
            "rmse": float(np.sqrt(np.mean(errs**2))) if ok else None,
            "mean_final_error": float(np.mean(errs)) if ok else None,
            "mean_iterations": float(np.mean([r["iterations"] for r in ok])) if ok else None,
            "stop_reasons": {
                reason: sum(r["converged_reason"] == reason for r in mine)
                for reason in sorted({r["converged_reason"] for r in mine})
            },
        }
    return summary


def run_monte_carlo(config: RunConfig, workers: int = 1, equivalence: bool = False) -> RunReport:
    """Run every filter on ``monte_carlo_runs`` sampled problems.

    Results are reduced in run-id order, so the report does not depend on
    ``workers``.
    """
    if workers <= 1:
        results = [_one_run(config, i, equivalence) for i in range(config.monte_carlo_runs)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda i: _one_run(config, i, equivalence), range(config.monte_carlo_runs)))
    rows = [row for r in results for row in r[0]]
    runs = [r[1] for r in results]
    report = RunReport(config.to_dict(), _summarize(config, rows), rows, runs)
    if equivalence:
        certs = [r[2] for r in results]
        report.equivalence = {
            "mode": "iplf",
            "instances": len(certs),
            "max_deviation": max(c.max_deviation for c in certs),
            "max_secant_residual": max(c.max_secant_residual for c in certs),
        }
    return report
