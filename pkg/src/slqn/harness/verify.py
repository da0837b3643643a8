"""Randomized certification of the exact quasi-Newton equivalence."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor

from ..bridge import certify_exact_qn
from ..filters import IterationConfig
from .config import VerifyConfig
from .instances import random_problem
from .montecarlo import run_rng


def _certify_one(cfg: VerifyConfig, k: int) -> dict:
    rng = run_rng(cfg.seed, k)
    problem, _, _ = random_problem(rng, max_dim=cfg.max_dim, max_degree=cfg.max_degree)
    rule = cfg.rules[k % len(cfg.rules)]
    iter_cfg = IterationConfig(max_iters=cfg.max_iters, kl_tol=cfg.kl_tol, rule=rule, gain=cfg.gain)
    report = certify_exact_qn(problem, iter_cfg, cfg.mode)
    entry = {
        "instance": k,
        "n": problem.n,
        "m": problem.m,
        "rule": rule.to_dict(),
        "iterations": len(report.checks),
        "reason": report.reason,
        "max_deviation": report.max_deviation,
        "max_secant_residual": report.max_secant_residual,
        "singular_count": report.singular_count,
    }
    if cfg.mode == "iukf":
        entry["p_shortcut_max_dev"] = report.p_shortcut_max_dev
    return entry


def run_verification(cfg: VerifyConfig, workers: int = 1) -> dict:
    if workers <= 1:
        per = [_certify_one(cfg, k) for k in range(cfg.instances)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per = list(pool.map(lambda k: _certify_one(cfg, k), range(cfg.instances)))
    max_dev = max(e["max_deviation"] for e in per)
    max_sec = max(e["max_secant_residual"] for e in per)
    reasons = {}
    for e in per:
        reasons[e["reason"]] = reasons.get(e["reason"], 0) + 1
    out = {
        "config": cfg.to_dict(),
        "instances": cfg.instances,
        "certified_iterations": sum(e["iterations"] for e in per),
        "max_deviation": max_dev,
        "max_secant_residual": max_sec,
        "singular_count": sum(e["singular_count"] for e in per),
        "stop_reasons": dict(sorted(reasons.items())),
        "passed": bool(max_dev <= cfg.tol and max_sec <= cfg.secant_tol),
        "per_instance": per,
    }
    if cfg.mode == "iukf":
        devs = [e["p_shortcut_max_dev"] for e in per if e["p_shortcut_max_dev"] is not None]
        out["p_shortcut_max_dev"] = max(devs, default=0.0)
    return out


def to_json(result: dict) -> str:
    return json.dumps(result, indent=2, sort_keys=True) + "\n"
