"""Statistical and analytical linearization of measurement functions.

A linearization is the affine-plus-noise surrogate ``g(x) ~ A x + b + e`` with
``e ~ N(0, Omega)``. Statistical linearization picks the parameters from the
first two joint moments of ``(x, g(x))`` under a Gaussian density, evaluated
with a sigma-point rule. Analytical linearization is the tangent at a point
and always has ``Omega = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, EvaluationFailure, InvalidRuleParameter
from .gauss import GaussianBelief, as_vector, solve_spd, symmetrize

__all__ = [
    "AffineLinearization",
    "MeasurementFn",
    "MomentStatistics",
    "SigmaPointRule",
    "analytical_linearize",
    "check_jacobian",
    "finite_difference_jacobian",
    "generate_sigma_points",
    "repair_psd",
    "statistical_linearize",
]


@dataclass(frozen=True)
class SigmaPointRule:
    """Sigma-point quadrature rule.

    ``kind`` is ``"unscented"`` or ``"cubature"``. For the unscented rule a
    ``kappa`` of ``None`` means the classical ``3 - n`` heuristic, resolved at
    the dimension of the density being integrated.
    """

    kind: str = "unscented"
    kappa: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("unscented", "cubature"):
            raise InvalidRuleParameter(f"unknown sigma-point rule {self.kind!r}")
        if self.kind == "cubature" and self.kappa is not None:
            raise InvalidRuleParameter("the cubature rule takes no kappa")

    @classmethod
    def unscented(cls, kappa: Optional[float] = None) -> "SigmaPointRule":
        return cls("unscented", None if kappa is None else float(kappa))

    @classmethod
    def cubature(cls) -> "SigmaPointRule":
        return cls("cubature")

    def kappa_for(self, n: int) -> float:
        return 3.0 - n if self.kappa is None else self.kappa

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kappa is not None:
            out["kappa"] = self.kappa
        return out


def generate_sigma_points(belief: GaussianBelief, rule: SigmaPointRule):
    """Return ``(points, weights)`` with points stacked row-wise, shape (N, n)."""
    n = belief.dim
    cols = belief.chol.T  # row j is column j of the lower Cholesky factor
    if rule.kind == "cubature":
        offsets = np.sqrt(n) * cols
        points = np.vstack([belief.mean + offsets, belief.mean - offsets])
        weights = np.full(2 * n, 1.0 / (2 * n))
        return points, weights

    kappa = rule.kappa_for(n)
    if n + kappa <= 0:
        raise InvalidRuleParameter(f"n + kappa must be positive, got {n} + {kappa}")
    offsets = np.sqrt(n + kappa) * cols
    points = np.vstack([belief.mean, belief.mean + offsets, belief.mean - offsets])
    weights = np.concatenate(
        [[kappa / (n + kappa)], np.full(2 * n, 1.0 / (2.0 * (n + kappa)))]
    )
    return points, weights


@dataclass(frozen=True)
class MeasurementFn:
    """A measurement model ``x -> g(x)`` with an optional analytic Jacobian.

    ``evaluate`` must be reentrant. Missing Jacobians fall back to central
    finite differences.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "g"

    def __call__(self, x) -> np.ndarray:
        x = as_vector(x, "x")
        try:
            z = self.evaluate(x)
        except Exception as exc:  # noqa: BLE001 - any model failure is reported uniformly
            raise EvaluationFailure(f"{self.name} raised {type(exc).__name__}: {exc}") from exc
        z = np.atleast_1d(np.asarray(z, dtype=np.float64))
        if z.ndim != 1:
            raise EvaluationFailure(f"{self.name} returned shape {z.shape}, expected a vector")
        if not np.all(np.isfinite(z)):
            raise EvaluationFailure(f"{self.name} returned non-finite values at x={x}")
        return z

    def jacobian_at(self, x) -> np.ndarray:
        x = as_vector(x, "x")
        if self.jacobian is None:
            return finite_difference_jacobian(self, x)
        try:
            jac = self.jacobian(x)
        except Exception as exc:  # noqa: BLE001
            raise EvaluationFailure(f"jacobian of {self.name} raised: {exc}") from exc
        jac = np.asarray(jac, dtype=np.float64)
        if jac.ndim < 2:
            jac = jac.reshape(-1, x.size)
        if not np.all(np.isfinite(jac)):
            raise EvaluationFailure(f"jacobian of {self.name} is non-finite at x={x}")
        return jac


def finite_difference_jacobian(g: MeasurementFn, x) -> np.ndarray:
    """Central differences with per-coordinate step ``1e-6 * (1 + |x_j|)``."""
    x = as_vector(x, "x")
    cols = []
    for j in range(x.size):
        step = 1e-6 * (1.0 + abs(x[j]))
        e = np.zeros_like(x)
        e[j] = step
        cols.append((g(x + e) - g(x - e)) / (2.0 * step))
    return np.column_stack(cols)


def check_jacobian(g: MeasurementFn, point) -> float:
    """Max of ``|analytic - finite difference| / (1 + |analytic|)`` over entries."""
    if g.jacobian is None:
        raise ValueError("check_jacobian needs an analytic jacobian")
    analytic = g.jacobian_at(point)
    numeric = finite_difference_jacobian(g, point)
    if analytic.shape != numeric.shape:
        raise DimensionMismatch(
            f"jacobian shape {analytic.shape} does not match {numeric.shape}"
        )
    return float(np.max(np.abs(analytic - numeric) / (1.0 + np.abs(analytic))))


@dataclass(frozen=True)
class AffineLinearization:
    slope: np.ndarray
    offset: np.ndarray
    error_cov: np.ndarray

    @property
    def A(self) -> np.ndarray:
        return self.slope

    @property
    def b(self) -> np.ndarray:
        return self.offset

    @property
    def Omega(self) -> np.ndarray:
        return self.error_cov

    def predict(self, x) -> np.ndarray:
        return self.slope @ as_vector(x) + self.offset


@dataclass(frozen=True)
class MomentStatistics:
    z_bar: np.ndarray
    psi: np.ndarray
    phi: np.ndarray


def repair_psd(a: np.ndarray) -> np.ndarray:
    """Symmetrize and clip negative eigenvalues to zero."""
    a = symmetrize(a)
    vals, vecs = np.linalg.eigh(a)
    if np.all(vals >= 0.0):
        return a
    vals = np.clip(vals, 0.0, None)
    return symmetrize((vecs * vals) @ vecs.T)


def statistical_linearize(g: MeasurementFn, density: GaussianBelief, rule: SigmaPointRule):
    """Fit ``A``, ``b``, ``Omega`` to ``g`` under ``density``.

    Returns ``(AffineLinearization, MomentStatistics)``. The slope is
    ``Psi^T P^{-1}`` computed as an SPD solve against ``P``.
    """
    points, weights = generate_sigma_points(density, rule)
    images = np.vstack([g(pt) for pt in points])
    z_bar = weights @ images
    dx = points - density.mean
    dz = images - z_bar
    psi = (dx * weights[:, None]).T @ dz
    phi = symmetrize((dz * weights[:, None]).T @ dz)

    slope = solve_spd(density.cov, psi).T
    offset = z_bar - slope @ density.mean
    omega = repair_psd(phi - slope @ density.cov @ slope.T)
    return (
        AffineLinearization(slope, offset, omega),
        MomentStatistics(z_bar, psi, phi),
    )


def analytical_linearize(g: MeasurementFn, point) -> AffineLinearization:
    """Tangent-line linearization at ``point``; ``Omega`` is identically zero."""
    point = as_vector(point, "point")
    z = g(point)
    slope = g.jacobian_at(point)
    if slope.shape != (z.size, point.size):
        raise DimensionMismatch(
            f"jacobian shape {slope.shape} does not match ({z.size}, {point.size})"
        )
    return AffineLinearization(slope, z - slope @ point, np.zeros((z.size, z.size)))
