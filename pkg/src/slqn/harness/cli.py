"""Command-line entry point: ``slqn {linearize,filter,verify,scenarios}``.

Exit codes: 0 ok, 1 numerical failure, 2 usage/config error, 3 certification
failure. Every error path writes one ``error: ...`` line on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from ..errors import SlqnError
from ..gauss import GaussianBelief
from ..statlin import MeasurementFn, SigmaPointRule, statistical_linearize
from .config import ConfigError, RunConfig, VerifyConfig, load_json
from .montecarlo import run_monte_carlo
from .scenarios import builtin_scenarios
from .verify import run_verification, to_json

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE, EXIT_CERT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _elementwise(f, df):
    return MeasurementFn(lambda x: f(x), lambda x: np.diag(df(x)))


BUILTIN_FNS = {
    "square": _elementwise(lambda x: x**2, lambda x: 2.0 * x),
    "cube": _elementwise(lambda x: x**3, lambda x: 3.0 * x**2),
    "cubic": _elementwise(lambda x: x**3 / 20.0, lambda x: 3.0 * x**2 / 20.0),
    "affine2x1": _elementwise(lambda x: 2.0 * x + 1.0, lambda x: np.full_like(x, 2.0)),
    "sin": _elementwise(np.sin, np.cos),
    "exp": _elementwise(np.exp, np.exp),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slqn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    lin = sub.add_parser("linearize", help="statistically linearize a builtin function")
    lin.add_argument("--fn", required=True, choices=sorted(BUILTIN_FNS))
    lin.add_argument("--mean", required=True, type=float, nargs="+")
    lin.add_argument("--cov", required=True, type=float, nargs="+",
                     help="n*n entries row-major, or n entries for a diagonal")
    lin.add_argument("--rule", default="unscented", choices=["unscented", "cubature"])
    lin.add_argument("--kappa", type=float, default=None)

    for name, helptext in (("filter", "Monte Carlo filter comparison"), ("verify", "certify the exact-QN equivalence")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--format", choices=["json", "csv"], default="json")
        p.add_argument("--workers", type=int, default=1)
        if name == "filter":
            p.add_argument("--equivalence", action="store_true",
                           help="also certify the exact-QN equivalence on every sampled problem")

    sc = sub.add_parser("scenarios", help="list builtin scenarios")
    sc.add_argument("--format", choices=["json", "csv"], default="json")
    return parser


def _parse_cov(values, n):
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == n * n:
        return arr.reshape(n, n)
    if arr.size == n:
        return np.diag(arr)
    raise UsageError(f"--cov needs {n} or {n * n} values, got {arr.size}")


def _cmd_linearize(args) -> int:
    n = len(args.mean)
    cov = _parse_cov(args.cov, n)
    if args.rule == "cubature":
        if args.kappa is not None:
            raise UsageError("--kappa is only valid with --rule unscented")
        rule = SigmaPointRule.cubature()
    else:
        rule = SigmaPointRule.unscented(args.kappa)
    lin, mom = statistical_linearize(BUILTIN_FNS[args.fn], GaussianBelief(args.mean, cov), rule)
    out = {
        "A": lin.slope.tolist(),
        "b": lin.offset.tolist(),
        "Omega": lin.error_cov.tolist(),
        "z_bar": mom.z_bar.tolist(),
        "Psi": mom.psi.tolist(),
        "Phi": mom.phi.tolist(),
    }
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def _resolve_out(out, config_out, default_stem):
    target = out or config_out or default_stem
    path = Path(target)
    if path.suffix in (".json", ".csv"):
        path = path.with_suffix("")
    return path


def _cmd_filter(args) -> int:
    config = RunConfig.from_dict(load_json(args.config))
    if args.seed is not None:
        config = dataclasses.replace(config, seed=_check_seed(args.seed))
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    report = run_monte_carlo(config, workers=args.workers, equivalence=args.equivalence)
    stem = _resolve_out(args.out, config.output, "report")
    stem.parent.mkdir(parents=True, exist_ok=True)
    json_text, csv_text = report.to_json(), report.to_csv()
    stem.with_suffix(".json").write_text(json_text)
    stem.with_suffix(".csv").write_text(csv_text)
    if args.format == "csv":
        sys.stdout.write(csv_text)
    else:
        print(json.dumps(report.summary, indent=2, sort_keys=True))
    if report.all_diverged:
        print("error: all runs diverged", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _check_seed(seed):
    if not 0 <= seed < 2**64:
        raise UsageError("--seed must be an unsigned 64-bit integer")
    return seed


def _cmd_verify(args) -> int:
    cfg = VerifyConfig.from_dict(load_json(args.config))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=_check_seed(args.seed))
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    result = run_verification(cfg, workers=args.workers)
    path = _resolve_out(args.out, cfg.output, "verify").with_suffix(".json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(result))
    summary = {k: result[k] for k in ("instances", "max_deviation", "max_secant_residual", "passed")}
    if "p_shortcut_max_dev" in result:
        summary["p_shortcut_max_dev"] = result["p_shortcut_max_dev"]
    print(json.dumps(summary, sort_keys=True))
    if not result["passed"]:
        print(
            f"error: certification failed: max_deviation={result['max_deviation']:.3e} "
            f"(tol {cfg.tol:g}), max_secant_residual={result['max_secant_residual']:.3e} "
            f"(tol {cfg.secant_tol:g})",
            file=sys.stderr,
        )
        return EXIT_CERT
    return EXIT_OK


def _cmd_scenarios(args) -> int:
    scenarios = builtin_scenarios()
    if args.format == "csv":
        print("name,description")
        for s in scenarios:
            print(f"{s.name},\"{s.description}\"")
    else:
        print(json.dumps(
            [{"name": s.name, "description": s.description, "defaults": s.defaults,
              "exact_oracle": s.exact_posterior is not None} for s in scenarios],
            indent=2,
        ))
    return EXIT_OK


_COMMANDS = {
    "linearize": _cmd_linearize,
    "filter": _cmd_filter,
    "verify": _cmd_verify,
    "scenarios": _cmd_scenarios,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SlqnError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
