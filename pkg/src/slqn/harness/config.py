"""File-backed run configurations.

Both configs are plain JSON objects. Unknown keys are rejected and
``to_dict`` returns the canonical form, so ``from_dict(to_dict(c)) == c``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..filters import IterationConfig
from ..statlin import SigmaPointRule

FILTER_NAMES = ("iekf", "qniekf", "qniekf_exact", "iplf", "iplf_prior", "iukf")
MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    pass


def _require_keys(data, required, optional, what):
    if not isinstance(data, dict):
        raise ConfigError(f"{what} must be a JSON object")
    unknown = set(data) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"unknown keys in {what}: {sorted(unknown)}")
    missing = set(required) - set(data)
    if missing:
        raise ConfigError(f"missing keys in {what}: {sorted(missing)}")


def _int(value, name, minimum):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def _positive(value, name, allow_zero=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise ConfigError(f"{name} must be {'non-negative' if allow_zero else 'positive'}, got {value!r}")
    return float(value)


def parse_rule(data) -> SigmaPointRule:
    _require_keys(data, ("kind",), ("kappa",), "rule")
    try:
        if data["kind"] == "cubature":
            if "kappa" in data:
                raise ConfigError("the cubature rule takes no kappa")
            return SigmaPointRule.cubature()
        if data["kind"] == "unscented":
            kappa = data.get("kappa")
            if kappa is not None and (isinstance(kappa, bool) or not isinstance(kappa, (int, float))):
                raise ConfigError(f"kappa must be a number, got {kappa!r}")
            return SigmaPointRule.unscented(kappa)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"rule kind must be 'unscented' or 'cubature', got {data['kind']!r}")


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    filters: tuple
    rule: SigmaPointRule = field(default_factory=SigmaPointRule)
    kl_tol: float = 1e-8
    max_iters: int = 50
    monte_carlo_runs: int = 100
    seed: int = 0
    params: dict = field(default_factory=dict)
    output: Optional[str] = None

    REQUIRED = ("scenario", "filters")
    OPTIONAL = ("rule", "kl_tol", "max_iters", "monte_carlo_runs", "seed", "params", "output")

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        _require_keys(data, cls.REQUIRED, cls.OPTIONAL, "config")
        from .scenarios import get_scenario

        try:
            scenario = get_scenario(str(data["scenario"]))
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from None
        filters = data["filters"]
        if not isinstance(filters, list) or not filters:
            raise ConfigError("filters must be a non-empty list")
        for name in filters:
            if name not in FILTER_NAMES:
                raise ConfigError(f"unknown filter {name!r}; choose from {list(FILTER_NAMES)}")
        params = data.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("params must be a JSON object")
        try:
            scenario.params(params)
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from None
        seed = _int(data.get("seed", 0), "seed", 0)
        if seed > MAX_SEED:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        output = data.get("output")
        if output is not None and not isinstance(output, str):
            raise ConfigError("output must be a string path")
        return cls(
            scenario=scenario.name,
            filters=tuple(filters),
            rule=parse_rule(data["rule"]) if "rule" in data else SigmaPointRule(),
            kl_tol=_positive(data.get("kl_tol", 1e-8), "kl_tol"),
            max_iters=_int(data.get("max_iters", 50), "max_iters", 1),
            monte_carlo_runs=_int(data.get("monte_carlo_runs", 100), "monte_carlo_runs", 1),
            seed=seed,
            params=dict(params),
            output=output,
        )

    def to_dict(self) -> dict:
        out = {
            "scenario": self.scenario,
            "filters": list(self.filters),
            "rule": self.rule.to_dict(),
            "kl_tol": self.kl_tol,
            "max_iters": self.max_iters,
            "monte_carlo_runs": self.monte_carlo_runs,
            "seed": self.seed,
            "params": dict(self.params),
        }
        if self.output is not None:
            out["output"] = self.output
        return out

    def iteration_config(self) -> IterationConfig:
        return IterationConfig(max_iters=self.max_iters, kl_tol=self.kl_tol, rule=self.rule)


@dataclass(frozen=True)
class VerifyConfig:
    """Instance sampling for the exact-QN certification.

    Instances cycle through ``rules``; every instance is certified in ``mode``.
    """

    mode: str
    instances: int = 200
    rules: tuple = (SigmaPointRule.unscented(), SigmaPointRule.cubature())
    tol: float = 1e-8
    secant_tol: float = 1e-10
    kl_tol: float = 1e-8
    max_iters: int = 50
    max_dim: int = 4
    max_degree: int = 3
    seed: int = 0
    gain: str = "iterate"
    output: Optional[str] = None

    REQUIRED = ("mode",)
    OPTIONAL = (
        "instances", "rules", "tol", "secant_tol", "kl_tol", "max_iters",
        "max_dim", "max_degree", "seed", "gain", "output",
    )

    @classmethod
    def from_dict(cls, data) -> "VerifyConfig":
        _require_keys(data, cls.REQUIRED, cls.OPTIONAL, "config")
        mode = data["mode"]
        if mode not in ("iplf", "iukf"):
            raise ConfigError(f"mode must be 'iplf' or 'iukf', got {mode!r}")
        rules = data.get("rules", [r.to_dict() for r in cls.rules])
        if not isinstance(rules, list) or not rules:
            raise ConfigError("rules must be a non-empty list")
        seed = _int(data.get("seed", 0), "seed", 0)
        if seed > MAX_SEED:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        output = data.get("output")
        if output is not None and not isinstance(output, str):
            raise ConfigError("output must be a string path")
        gain = data.get("gain", "iterate")
        if gain not in ("iterate", "prior"):
            raise ConfigError(f"gain must be 'iterate' or 'prior', got {gain!r}")
        return cls(
            mode=mode,
            gain=gain,
            instances=_int(data.get("instances", 200), "instances", 1),
            rules=tuple(parse_rule(r) for r in rules),
            tol=_positive(data.get("tol", 1e-8), "tol", allow_zero=True),
            secant_tol=_positive(data.get("secant_tol", 1e-10), "secant_tol", allow_zero=True),
            kl_tol=_positive(data.get("kl_tol", 1e-8), "kl_tol"),
            max_iters=_int(data.get("max_iters", 50), "max_iters", 1),
            max_dim=_int(data.get("max_dim", 4), "max_dim", 1),
            max_degree=_int(data.get("max_degree", 3), "max_degree", 1),
            seed=seed,
            output=output,
        )

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "instances": self.instances,
            "rules": [r.to_dict() for r in self.rules],
            "tol": self.tol,
            "secant_tol": self.secant_tol,
            "kl_tol": self.kl_tol,
            "max_iters": self.max_iters,
            "max_dim": self.max_dim,
            "max_degree": self.max_degree,
            "seed": self.seed,
            "gain": self.gain,
        }
        if self.output is not None:
            out["output"] = self.output
        return out


def load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
