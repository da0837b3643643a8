"""Exact quasi-Newton view of statistically linearized iterated filters.

Equating the QN-IEKF update with the IPLF update gives the secant-type
condition ``T_i s_i = p_i`` with

    s_i = x_tilde + K_i eps_i                      (= x_{i+1} - x_i)
    p_i = (H^T R^{-1} Omega + (I - P^{-1} P_i) H^T) S_i eps_i

where ``S_i`` is the inverse innovation covariance. ``T_i`` is then built from
``T_{i-1}`` by the symmetric rank-two update that is closest to ``T_{i-1}`` in
Frobenius norm among all symmetric matrices satisfying the condition
(c = s). With that ``T_i`` the QN-IEKF reproduces the IPLF iterate exactly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateStep, DimensionMismatch, RouteMismatch, SlqnError
from .filters import (
    FilterIterate,
    IterationConfig,
    MeasurementProblem,
    StopReason,
    _drive,
    iplf_iterate,
    iukf_iterate,
    qn_iekf_iterate,
)
from .gauss import GaussianBelief, as_vector, kl_divergence, solve_spd, symmetrize
from .statlin import AffineLinearization

__all__ = [
    "BridgeQuantities",
    "CorrectionState",
    "EquivalenceReport",
    "IterationCheck",
    "certify_exact_qn",
    "check_dfp_condition",
    "compute_epsilon",
    "compute_p",
    "compute_p_iukf",
    "compute_s",
    "exact_qn_trace",
    "frobenius_minimality_witness",
    "psb_like_update",
    "s_zero_tol",
    "star_direct",
    "star_forms_agree",
    "star_simplified",
]


# Conditioning budget of the certified equivalence tolerance.
MAX_COND = 1e6


def s_zero_tol(x_i) -> float:
    return 1e-12 * (1.0 + float(np.linalg.norm(x_i)))


@dataclass(frozen=True)
class BridgeQuantities:
    epsilon: np.ndarray
    s: np.ndarray
    p: np.ndarray
    star: np.ndarray


@dataclass
class CorrectionState:
    T: np.ndarray
    iteration: int = 0

    @classmethod
    def zero(cls, n: int) -> "CorrectionState":
        return cls(np.zeros((n, n)), 0)

    def advance(self, s, p) -> "CorrectionState":
        return CorrectionState(psb_like_update(self.T, s, p), self.iteration + 1)


def compute_epsilon(problem: MeasurementProblem, x_i, lin: AffineLinearization, h_i=None) -> np.ndarray:
    """``y - h_i - H_i (x_hat - x_i)``; ``h_i`` defaults to ``lin`` evaluated at ``x_i``."""
    x_i = as_vector(x_i, "x_i")
    if x_i.size != problem.n or lin.slope.shape != (problem.m, problem.n):
        raise DimensionMismatch("inconsistent shapes in compute_epsilon")
    if h_i is None:
        h_i = lin.predict(x_i)
    h_i = as_vector(h_i, "h_i")
    if h_i.size != problem.m:
        raise DimensionMismatch(f"h_i has length {h_i.size}, expected {problem.m}")
    return problem.observation - h_i - lin.slope @ (problem.x_hat - x_i)


def compute_s(problem: MeasurementProblem, x_i, iplf_next, K, epsilon, tol: float = 1e-10) -> np.ndarray:
    """Step ``x_tilde + K eps``, checked against ``iplf_next - x_i``."""
    x_i = as_vector(x_i, "x_i")
    s = (problem.x_hat - x_i) + np.asarray(K) @ np.asarray(epsilon)
    other = as_vector(iplf_next, "iplf_next") - x_i
    gap = float(np.linalg.norm(s - other))
    if gap > tol * (1.0 + float(np.linalg.norm(x_i))):
        raise RouteMismatch(f"the two step expressions differ by {gap:.3e}")
    return s


def _check_star_shapes(P_prior, P_i, H, R, S_inv):
    m, n = H.shape
    if P_prior.shape != (n, n) or P_i.shape != (n, n) or R.shape != (m, m) or S_inv.shape != (m, m):
        raise DimensionMismatch("inconsistent shapes for the (*) factor")


def star_direct(P_prior, P_i, lin: AffineLinearization, R, S_inv) -> np.ndarray:
    """Unsimplified factor ``H^T R^{-1} - (H^T R^{-1} H + P^{-1}) K``, ``K = P_i H^T S``."""
    P_prior, P_i, R, S_inv = (np.asarray(a, dtype=np.float64) for a in (P_prior, P_i, R, S_inv))
    H = lin.slope
    _check_star_shapes(P_prior, P_i, H, R, S_inv)
    HtRinv = solve_spd(R, H).T
    K = P_i @ H.T @ S_inv
    return HtRinv - HtRinv @ H @ K - solve_spd(P_prior, K)


def star_simplified(P_prior, P_i, lin: AffineLinearization, R, S_inv) -> np.ndarray:
    """Simplified factor ``(H^T R^{-1} Omega + (I - P^{-1} P_i) H^T) S``."""
    P_prior, P_i, R, S_inv = (np.asarray(a, dtype=np.float64) for a in (P_prior, P_i, R, S_inv))
    H = lin.slope
    _check_star_shapes(P_prior, P_i, H, R, S_inv)
    HtRinv = solve_spd(R, H).T
    n = H.shape[1]
    return (HtRinv @ lin.error_cov + (np.eye(n) - solve_spd(P_prior, P_i)) @ H.T) @ S_inv


def star_forms_agree(P_prior, P_i, lin: AffineLinearization, R, S_inv) -> float:
    first = star_direct(P_prior, P_i, lin, R, S_inv)
    second = star_simplified(P_prior, P_i, lin, R, S_inv)
    return float(np.linalg.norm(first - second) / (1.0 + np.linalg.norm(first)))


def compute_p(P_prior, P_i, lin: AffineLinearization, R, S_inv, epsilon) -> np.ndarray:
    epsilon = as_vector(epsilon, "epsilon")
    if epsilon.size != lin.slope.shape[0]:
        raise DimensionMismatch(f"epsilon has length {epsilon.size}, expected {lin.slope.shape[0]}")
    return star_simplified(P_prior, P_i, lin, R, S_inv) @ epsilon


def compute_p_iukf(lin: AffineLinearization, R, S_inv, epsilon) -> np.ndarray:
    """Shortcut ``H^T R^{-1} Omega S eps``, valid when the gain uses the prior ``P``."""
    epsilon = as_vector(epsilon, "epsilon")
    H = lin.slope
    m = H.shape[0]
    R = np.asarray(R, dtype=np.float64)
    S_inv = np.asarray(S_inv, dtype=np.float64)
    if R.shape != (m, m) or S_inv.shape != (m, m) or epsilon.size != m:
        raise DimensionMismatch("inconsistent shapes in compute_p_iukf")
    return solve_spd(R, H).T @ (lin.error_cov @ (S_inv @ epsilon))


def psb_like_update(T_prev, s, p, s_zero: float = 1e-12) -> np.ndarray:
    """Symmetric rank-two update of ``T_prev`` so that ``T s = p``.

    With ``r = p - T_prev s``::

        T = T_prev + (r s^T + s r^T) / (s^T s) - (r^T s) / (s^T s)^2 * s s^T

    Raises DegenerateStep when ``||s|| <= s_zero``.
    """
    T_prev = np.asarray(T_prev, dtype=np.float64)
    s = as_vector(s, "s")
    p = as_vector(p, "p")
    n = s.size
    if T_prev.shape != (n, n) or p.size != n:
        raise DimensionMismatch("inconsistent shapes in psb_like_update")
    if not np.linalg.norm(s) > s_zero:
        raise DegenerateStep(f"||s|| = {np.linalg.norm(s):.3e} <= {s_zero:.3e}")
    ss = float(s @ s)
    r = p - T_prev @ s
    T = T_prev + (np.outer(r, s) + np.outer(s, r)) / ss - (float(r @ s) / ss**2) * np.outer(s, s)
    return symmetrize(T)


def check_dfp_condition(s, p) -> float:
    """``s^T p``; a positive-definite DFP-type correction would require it > 0."""
    return float(as_vector(s) @ as_vector(p))


def frobenius_minimality_witness(T_prev, s, p, trials: int = 100, seed: int = 0) -> bool:
    """Check the PSB-like update against random feasible competitors.

    Every ``T* + Q M Q`` with ``Q = I - s s^T / s^T s`` and symmetric ``M`` is
    symmetric and still maps ``s`` to ``p``; none may be closer to ``T_prev``.
    """
    s = as_vector(s, "s")
    T_prev = np.asarray(T_prev, dtype=np.float64)
    T_star = psb_like_update(T_prev, s, p)
    n = s.size
    Q = np.eye(n) - np.outer(s, s) / float(s @ s)
    best = np.linalg.norm(T_star - T_prev)
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        M = rng.standard_normal((n, n))
        M = M + M.T
        if np.linalg.norm((T_star + Q @ M @ Q) - T_prev) + 1e-9 < best:
            return False
    return True


# ---------------------------------------------------------------------------
# Certification


@dataclass
class IterationCheck:
    index: int
    deviation: Optional[float]
    secant_residual: float
    s_norm: float
    p_norm: float
    dfp: float
    kl_step: float
    p_shortcut_dev: Optional[float] = None
    singular: bool = False


@dataclass
class EquivalenceReport:
    mode: str
    rule: dict
    checks: list = field(default_factory=list)
    reason: str = StopReason.MAX_ITERS.value
    failure: Optional[str] = None

    @property
    def max_deviation(self) -> float:
        devs = [c.deviation for c in self.checks if c.deviation is not None]
        return max(devs, default=0.0)

    @property
    def max_secant_residual(self) -> float:
        return max((c.secant_residual for c in self.checks), default=0.0)

    @property
    def p_shortcut_max_dev(self) -> Optional[float]:
        devs = [c.p_shortcut_dev for c in self.checks if c.p_shortcut_dev is not None]
        return max(devs) if devs else None

    @property
    def singular_count(self) -> int:
        return sum(c.singular for c in self.checks)

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "rule": self.rule,
            "reason": self.reason,
            "failure": self.failure,
            "iterations": len(self.checks),
            "max_deviation": self.max_deviation,
            "max_secant_residual": self.max_secant_residual,
            "singular_count": self.singular_count,
            "checks": [asdict(c) for c in self.checks],
        }
        if self.mode == "iukf":
            out["p_shortcut_max_dev"] = self.p_shortcut_max_dev
        return out


def _bridge_step(problem: MeasurementProblem, it: FilterIterate) -> BridgeQuantities:
    eps = compute_epsilon(problem, it.x, it.lin, it.h_i)
    s = compute_s(problem, it.x, it.x_next, it.K, eps)
    star = star_simplified(problem.P, it.gain_cov, it.lin, problem.R, it.S_inv_innov)
    return BridgeQuantities(eps, s, star @ eps, star)


def certify_exact_qn(
    problem: MeasurementProblem,
    config: IterationConfig,
    mode: str = "iplf",
    max_cond: float = MAX_COND,
) -> EquivalenceReport:
    """Run the IPLF (or IUKF) and, at every iteration, the QN-IEKF with the
    derived correction; record how far the two updates are apart.

    Certification of an instance stops (reason ``IllConditioned``) at the
    first iteration where the innovation covariance or the corrected
    Hessian has condition number above ``max_cond``; beyond that point the
    two solve paths are not expected to agree to the certified tolerance.
    """
    if mode not in ("iplf", "iukf"):
        raise ValueError(f"mode must be 'iplf' or 'iukf', got {mode!r}")
    report = EquivalenceReport(mode, config.rule.to_dict())
    state = CorrectionState.zero(problem.n)
    x, P_i = problem.x_hat, problem.P
    for i in range(config.max_iters):
        try:
            if mode == "iplf":
                it = iplf_iterate(problem, x, P_i, config.rule, config.gain)
                next_cov = it.P_next
            else:
                it = iukf_iterate(problem, x, config.rule)
                next_cov = problem.P
            bq = _bridge_step(problem, it)
        except SlqnError as exc:
            report.reason = StopReason.DIVERGED.value
            report.failure = f"{type(exc).__name__}: {exc}"
            return report
        if np.linalg.norm(bq.s) <= s_zero_tol(x):
            report.reason = StopReason.FIXED_POINT.value
            return report

        shortcut_dev = None
        if mode == "iukf":
            shortcut = compute_p_iukf(it.lin, problem.R, it.S_inv_innov, bq.epsilon)
            shortcut_dev = float(np.max(np.abs(shortcut - bq.p)))

        state = state.advance(bq.s, bq.p)
        hessian = symmetrize(it.lin.slope.T @ problem.R_inv @ it.lin.slope + problem.P_inv + state.T)
        if max(np.linalg.cond(it.innov_cov), np.linalg.cond(hessian)) > max_cond:
            report.reason = StopReason.ILL_CONDITIONED.value
            return report
        secant = float(np.linalg.norm(state.T @ bq.s - bq.p) / (1.0 + np.linalg.norm(bq.p)))
        try:
            x_qn, _ = qn_iekf_iterate(problem, x, state.T, it.lin, h_i=it.h_i)
            dev, singular = float(np.linalg.norm(x_qn - it.x_next) / (1.0 + np.linalg.norm(it.x_next))), False
        except SlqnError:
            # SingularSystem, or a QN covariance that lost definiteness numerically
            dev, singular = None, True
        kl = kl_divergence(GaussianBelief(it.x_next, next_cov), GaussianBelief(x, P_i))
        report.checks.append(
            IterationCheck(
                i, dev, secant, float(np.linalg.norm(bq.s)), float(np.linalg.norm(bq.p)),
                check_dfp_condition(bq.s, bq.p), kl, shortcut_dev, singular,
            )
        )
        x, P_i = it.x_next, next_cov
        if kl <= config.kl_tol:
            report.reason = StopReason.KL_TOL.value
            return report
    return report


def exact_qn_trace(problem: MeasurementProblem, config: IterationConfig):
    """QN-IEKF whose correction is rebuilt each iteration from a companion IPLF.

    Iterates come from the QN route; the companion carries the IPLF covariance
    used as linearization density. The reported covariance is the QN-IEKF one.
    """
    companion = {"P_i": problem.P, "state": CorrectionState.zero(problem.n)}

    def step(x, cov):
        it = iplf_iterate(problem, x, companion["P_i"], config.rule, config.gain)
        bq = _bridge_step(problem, it)
        companion["P_i"] = it.P_next
        if np.linalg.norm(bq.s) <= s_zero_tol(x):
            return x, cov, it.lin, cov
        companion["state"] = companion["state"].advance(bq.s, bq.p)
        x_next, P_next = qn_iekf_iterate(problem, x, companion["state"].T, it.lin, h_i=it.h_i)
        return x_next, P_next, it.lin, P_next

    trace = _drive(problem, config, "qniekf_exact", step)
    return trace
