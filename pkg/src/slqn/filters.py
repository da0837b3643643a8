"""Iterated measurement updates: IEKF, QN-IEKF, IPLF and IUKF/ICKF.

All filters treat a single measurement update with prior ``N(x_hat, P)``,
observation ``y`` and noise covariance ``R``. Iterations start at
``x_0 = x_hat`` (and ``P_0 = P``) and stop on a small KL step between two
consecutive posterior approximations, on an exact fixed point, or after
``max_iters`` updates.

Notation used in the code: ``x_tilde = x_hat - x_i`` and
``eps = y - h_i - H_i x_tilde``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, SingularSystem, SlqnError
from .gauss import (
    GaussianBelief,
    as_spd,
    as_vector,
    kl_divergence,
    solve_spd,
    spd_inverse,
    symmetrize,
)
from .statlin import (
    AffineLinearization,
    MeasurementFn,
    SigmaPointRule,
    analytical_linearize,
    statistical_linearize,
)

__all__ = [
    "Correction",
    "FilterIterate",
    "FilterKind",
    "IterationConfig",
    "IterationRecord",
    "IterationTrace",
    "MeasurementProblem",
    "StopReason",
    "iekf_iterate",
    "iplf_iterate",
    "iukf_iterate",
    "map_cost",
    "map_gradient",
    "map_jacobian",
    "map_residual",
    "qn_covariance",
    "qn_iekf_iterate",
    "run_filter",
]

# Condition number above which the corrected Hessian is treated as singular.
SINGULAR_COND = 1e14


class FilterKind(str, Enum):
    IEKF = "iekf"
    QNIEKF = "qniekf"
    IPLF = "iplf"
    IUKF = "iukf"


class Correction(str, Enum):
    """Hessian-correction policy for the QN-IEKF."""

    ZERO = "zero"
    EXACT = "exact"  # T_i built from the IPLF so both updates coincide


class StopReason(str, Enum):
    KL_TOL = "KlTol"
    MAX_ITERS = "MaxIters"
    FIXED_POINT = "FixedPoint"
    DIVERGED = "Diverged"
    ILL_CONDITIONED = "IllConditioned"  # certification only


@dataclass(frozen=True)
class MeasurementProblem:
    """One measurement update: ``y = g(x) + v``, ``v ~ N(0, R)``, prior ``N(x_hat, P)``."""

    g: MeasurementFn
    noise_cov: np.ndarray
    observation: np.ndarray
    prior: GaussianBelief
    _cache: dict = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        obs = as_vector(self.observation, "observation").copy()
        obs.setflags(write=False)
        noise = as_spd(self.noise_cov, "noise_cov")
        if noise.shape[0] != obs.size:
            raise DimensionMismatch(
                f"noise_cov is {noise.shape}, observation has length {obs.size}"
            )
        object.__setattr__(self, "observation", obs)
        object.__setattr__(self, "noise_cov", noise)

    @property
    def n(self) -> int:
        return self.prior.dim

    @property
    def m(self) -> int:
        return self.observation.size

    @property
    def x_hat(self) -> np.ndarray:
        return self.prior.mean

    @property
    def P(self) -> np.ndarray:
        return self.prior.cov

    @property
    def R(self) -> np.ndarray:
        return self.noise_cov

    def _cached(self, key, fn):
        if key not in self._cache:
            value = fn()
            value.setflags(write=False)
            self._cache[key] = value
        return self._cache[key]

    @property
    def R_inv(self) -> np.ndarray:
        return self._cached("R_inv", lambda: spd_inverse(self.R))

    @property
    def P_inv(self) -> np.ndarray:
        return self._cached("P_inv", lambda: spd_inverse(self.P))

    @property
    def R_chol(self) -> np.ndarray:
        return self._cached("R_chol", lambda: np.linalg.cholesky(self.R))

    def measure(self, x) -> np.ndarray:
        z = self.g(x)
        if z.size != self.m:
            raise DimensionMismatch(f"g returned length {z.size}, expected {self.m}")
        return z


@dataclass(frozen=True)
class IterationConfig:
    max_iters: int = 50
    kl_tol: float = 1e-8
    rule: SigmaPointRule = field(default_factory=SigmaPointRule)
    linearization: str = "analytical"  # used by the QN-IEKF with zero correction
    gain: str = "iterate"  # IPLF gain covariance: "iterate" (P_i) or "prior" (P)

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters}")
        if not self.kl_tol > 0:
            raise ValueError(f"kl_tol must be positive, got {self.kl_tol}")
        if self.linearization not in ("analytical", "statistical"):
            raise ValueError(f"unknown linearization {self.linearization!r}")
        if self.gain not in ("iterate", "prior"):
            raise ValueError(f"unknown gain {self.gain!r}")


# ---------------------------------------------------------------------------
# MAP cost and its derivatives


def _inv_sqrt_apply(chol: np.ndarray, v: np.ndarray) -> np.ndarray:
    # L^{-1} v with L the lower Cholesky factor, so (L^{-1}v)^T (L^{-1}v) = v^T C^{-1} v
    return scipy.linalg.solve_triangular(chol, v, lower=True)


def map_residual(problem: MeasurementProblem, x) -> np.ndarray:
    x = as_vector(x, "x")
    if x.size != problem.n:
        raise DimensionMismatch(f"x has length {x.size}, expected {problem.n}")
    meas = _inv_sqrt_apply(problem.R_chol, problem.observation - problem.measure(x))
    prior = _inv_sqrt_apply(problem.prior.chol, problem.x_hat - x)
    return np.concatenate([meas, prior])


def map_cost(problem: MeasurementProblem, x) -> float:
    """``V(x) = r(x)^T r(x) / 2`` for the stacked measurement/prior residual."""
    r = map_residual(problem, x)
    return 0.5 * float(r @ r)


def map_jacobian(problem: MeasurementProblem, x) -> np.ndarray:
    x = as_vector(x, "x")
    H = problem.g.jacobian_at(x)
    return -np.vstack(
        [_inv_sqrt_apply(problem.R_chol, H), _inv_sqrt_apply(problem.prior.chol, np.eye(problem.n))]
    )


def map_gradient(problem: MeasurementProblem, x) -> np.ndarray:
    return map_jacobian(problem, x).T @ map_residual(problem, x)


# ---------------------------------------------------------------------------
# Single iterate updates


def qn_covariance(problem: MeasurementProblem, H: np.ndarray) -> np.ndarray:
    """``P - P H^T (H P H^T + R)^{-1} H P``; the QN-IEKF covariance ignores T."""
    HP = H @ problem.P
    gain_t = solve_spd(symmetrize(HP @ H.T + problem.R), HP)
    return as_spd(problem.P - HP.T @ gain_t, "P_next")


def iekf_iterate(problem: MeasurementProblem, x_i) -> np.ndarray:
    """Gauss-Newton step on the MAP cost, written in Kalman-gain form."""
    x_i = as_vector(x_i, "x_i")
    lin = analytical_linearize(problem.g, x_i)
    H = lin.slope
    h_i = lin.predict(x_i)
    eps = problem.observation - h_i - H @ (problem.x_hat - x_i)
    innov = symmetrize(H @ problem.P @ H.T + problem.R)
    gain = solve_spd(innov, H @ problem.P).T
    return problem.x_hat + gain @ eps


def qn_iekf_iterate(
    problem: MeasurementProblem,
    x_i,
    T_i,
    lin: AffineLinearization,
    h_i: Optional[np.ndarray] = None,
):
    """Quasi-Newton IEKF update with Hessian correction ``T_i``.

    Returns ``(x_next, P_next)``. ``h_i`` defaults to the linearization
    evaluated at ``x_i``, which is ``g(x_i)`` for an analytical linearization.
    Only ``R`` (never ``R + Omega``) enters this update.
    """
    x_i = as_vector(x_i, "x_i")
    n = problem.n
    T_i = np.zeros((n, n)) if np.isscalar(T_i) and T_i == 0 else np.asarray(T_i, dtype=np.float64)
    H = lin.slope
    if T_i.shape != (n, n) or H.shape != (problem.m, n) or x_i.size != n:
        raise DimensionMismatch("inconsistent shapes in qn_iekf_iterate")
    if h_i is None:
        h_i = lin.predict(x_i)

    x_tilde = problem.x_hat - x_i
    eps = problem.observation - h_i - H @ x_tilde
    HtRinv = H.T @ problem.R_inv
    hessian = symmetrize(HtRinv @ H + problem.P_inv + T_i)
    if not np.all(np.isfinite(hessian)) or np.linalg.cond(hessian) > SINGULAR_COND:
        raise SingularSystem("corrected Gauss-Newton Hessian is singular")
    step = np.linalg.solve(hessian, HtRinv @ eps - T_i @ x_tilde)
    return problem.x_hat + step, qn_covariance(problem, H)


@dataclass(frozen=True)
class FilterIterate:
    """Everything computed during one statistically linearized update.

    ``P_i`` is the linearization covariance and ``gain_cov`` the covariance
    used in the gain (``P_i`` for the IPLF, ``P`` for the IUKF).
    ``S_inv_innov`` is the inverse innovation covariance and
    ``innov_cov = H gain_cov H^T + R + Omega`` the innovation covariance itself.
    ``x_next``/``P_next`` are the results of the update.
    """

    x: np.ndarray
    P_i: np.ndarray
    gain_cov: np.ndarray
    lin: AffineLinearization
    h_i: np.ndarray
    innov_cov: np.ndarray
    S_inv_innov: np.ndarray
    K: np.ndarray
    epsilon: np.ndarray
    x_next: np.ndarray
    P_next: np.ndarray


def _sl_update(problem, x_i, P_i, rule, iterate_gain):
    x_i = as_vector(x_i, "x_i")
    lin, _ = statistical_linearize(problem.g, GaussianBelief(x_i, P_i), rule)
    H, omega = lin.slope, lin.error_cov
    if H.shape[0] != problem.m:
        raise DimensionMismatch(f"g returned length {H.shape[0]}, expected {problem.m}")
    gain_cov = P_i if iterate_gain else problem.P
    innov = symmetrize(H @ gain_cov @ H.T + problem.R + omega)
    S = spd_inverse(innov)
    K = gain_cov @ H.T @ S
    # With the iterate gain, h_i = b + A x_hat keeps the Kalman posterior a fixed
    # point on linear models; with the prior gain that needs h_i = b + A x_i.
    h_i = lin.predict(problem.x_hat if iterate_gain else x_i)
    eps = problem.observation - h_i - H @ (problem.x_hat - x_i)
    x_next = problem.x_hat + K @ eps

    # Posterior covariance of the prior under the linearized model with noise R + Omega.
    HP = H @ problem.P
    prior_innov = symmetrize(HP @ H.T + problem.R + omega)
    P_next = as_spd(problem.P - HP.T @ solve_spd(prior_innov, HP), "P_next")
    return FilterIterate(x_i, np.asarray(P_i), gain_cov, lin, h_i, innov, S, K, eps, x_next, P_next)


def iplf_iterate(
    problem: MeasurementProblem, x_i, P_i, rule: SigmaPointRule, gain: str = "iterate"
) -> FilterIterate:
    """IPLF update with statistical linearization at ``N(x_i, P_i)``.

    By default the gain uses ``P_i`` and ``h_i = b + A x_hat``. ``gain="prior"``
    gives the standard posterior linearization filter (gain from ``P``,
    ``h_i = b + A x_i``). Either way the covariance is the posterior of the
    prior under the linearized model with noise ``R + Omega``.
    """
    P_i = as_spd(P_i, "P_i")
    if gain == "iterate":
        return _sl_update(problem, x_i, P_i, rule, iterate_gain=True)
    if gain == "prior":
        return _sl_update(problem, x_i, P_i, rule, iterate_gain=False)
    raise ValueError(f"unknown gain {gain!r}")


def iukf_iterate(problem: MeasurementProblem, x_i, rule: SigmaPointRule) -> FilterIterate:
    """IUKF/ICKF update: linearization covariance and gain use the prior ``P``.

    Here ``h_i = b + A x_i`` so that ``eps = y - b - A x_hat``.
    """
    return _sl_update(problem, x_i, problem.P, rule, iterate_gain=False)


# ---------------------------------------------------------------------------
# Iteration driver


@dataclass(frozen=True)
class IterationRecord:
    index: int
    x: np.ndarray
    cov: np.ndarray
    lin: Optional[AffineLinearization]
    cost: float
    kl_step: float
    step_norm: float


@dataclass
class IterationTrace:
    """Per-iteration records plus the final posterior.

    ``iterations`` is the index of the update at which the stopping rule
    fired (so a linear model reports 1), or ``max_iters``.
    """

    kind: str
    records: list
    reason: StopReason
    final: GaussianBelief
    iterations: int
    failure: Optional[str] = None

    @property
    def diverged(self) -> bool:
        return self.reason is StopReason.DIVERGED


def _safe_cost(problem, x) -> float:
    try:
        return map_cost(problem, x)
    except SlqnError:
        return float("nan")


def _drive(problem, config, kind, step):
    """Generic loop. ``step(x, cov)`` returns ``(x_next, cov_next, lin, final_cov)``."""
    x, cov = problem.x_hat, problem.P
    final_cov = cov
    records = []
    reason = StopReason.MAX_ITERS
    iterations = config.max_iters
    failure = None
    for i in range(config.max_iters):
        try:
            x_next, cov_next, lin, final_cov_next = step(x, cov)
            kl = kl_divergence(GaussianBelief(x_next, cov_next), GaussianBelief(x, cov))
        except SlqnError as exc:
            reason, iterations, failure = StopReason.DIVERGED, i, f"{type(exc).__name__}: {exc}"
            break
        records.append(
            IterationRecord(i, x, cov, lin, _safe_cost(problem, x), kl, float(np.linalg.norm(x_next - x)))
        )
        same = np.array_equal(x_next, x)
        x, cov, final_cov = x_next, cov_next, final_cov_next
        if kl <= config.kl_tol:
            reason, iterations = StopReason.KL_TOL, i
            break
        if same:
            reason, iterations = StopReason.FIXED_POINT, i
            break
    return IterationTrace(kind, records, reason, GaussianBelief(x, final_cov), iterations, failure)


def run_filter(
    problem: MeasurementProblem,
    config: IterationConfig,
    kind,
    correction: Correction = Correction.ZERO,
) -> IterationTrace:
    kind = FilterKind(kind)
    correction = Correction(correction)

    if kind is FilterKind.IEKF:
        def step(x, cov):
            x_next = iekf_iterate(problem, x)
            lin = analytical_linearize(problem.g, x)
            P_next = qn_covariance(problem, lin.slope)
            return x_next, P_next, lin, P_next
        return _drive(problem, config, kind.value, step)

    if kind is FilterKind.QNIEKF:
        if correction is Correction.EXACT:
            from .bridge import exact_qn_trace

            return exact_qn_trace(problem, config)

        def step(x, cov):
            if config.linearization == "analytical":
                lin = analytical_linearize(problem.g, x)
            else:
                lin, _ = statistical_linearize(problem.g, GaussianBelief(x, problem.P), config.rule)
            x_next, P_next = qn_iekf_iterate(problem, x, 0, lin)
            return x_next, P_next, lin, P_next
        return _drive(problem, config, kind.value, step)

    if kind is FilterKind.IPLF:
        def step(x, cov):
            it = iplf_iterate(problem, x, cov, config.rule, config.gain)
            return it.x_next, it.P_next, it.lin, it.P_next
        return _drive(problem, config, kind.value, step)

    def step(x, cov):
        it = iukf_iterate(problem, x, config.rule)
        return it.x_next, problem.P, it.lin, it.P_next
    return _drive(problem, config, kind.value, step)
