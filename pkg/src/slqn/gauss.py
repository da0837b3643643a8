"""Gaussian beliefs and SPD-safe linear algebra.

Every inverse that appears in the filter equations goes through a Cholesky
factorization here. Nothing is regularized at this layer: a covariance that
fails Cholesky after symmetrization is rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotPositiveDefinite

__all__ = [
    "GaussianBelief",
    "as_vector",
    "as_spd",
    "cholesky_lower",
    "kl_divergence",
    "make_belief",
    "solve_spd",
    "spd_inverse",
    "symmetrize",
]


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def cholesky_lower(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``a``; raises NotPositiveDefinite on failure."""
    try:
        return scipy.linalg.cholesky(a, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NotPositiveDefinite(f"matrix is not positive definite: {exc}") from None


def as_spd(a, name: str = "matrix") -> np.ndarray:
    """Validate and return a symmetrized, read-only SPD copy of ``a``.

    Scalars and 1-element inputs are promoted to 1x1 matrices.
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {arr.shape}")
    arr = symmetrize(arr)
    cholesky_lower(arr)
    arr.setflags(write=False)
    return arr


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` for SPD ``a`` via Cholesky.

    ``b`` may be a vector or a matrix with ``a.shape[0]`` rows; the result has
    the same shape as ``b``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"A must be square, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"B has {b.shape[0]} rows, expected {a.shape[0]}")
    factor = cholesky_lower(symmetrize(a))
    return scipy.linalg.cho_solve((factor, True), b, check_finite=False)


def spd_inverse(a) -> np.ndarray:
    """Explicit inverse, for the few places where the inverse itself is stored."""
    a = np.asarray(a, dtype=np.float64)
    return symmetrize(solve_spd(a, np.eye(a.shape[0])))


@dataclass(frozen=True)
class GaussianBelief:
    """Mean and SPD covariance of a Gaussian density.

    The covariance is symmetrized on construction and both arrays are made
    read-only, so instances can be shared freely.
    """

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = as_vector(self.mean, "mean").copy()
        cov = np.asarray(self.cov, dtype=np.float64)
        if cov.ndim == 0:
            cov = cov.reshape(1, 1)
        if cov.ndim != 2 or cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(
                f"cov shape {cov.shape} does not match mean of length {mean.size}"
            )
        cov = symmetrize(cov)
        chol = cholesky_lower(cov)
        for arr in (mean, cov, chol):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.size

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


def make_belief(mean, cov) -> GaussianBelief:
    return GaussianBelief(mean, cov)


def kl_divergence(q_from: GaussianBelief, q_to: GaussianBelief) -> float:
    """Closed-form ``KL(q_from || q_to)`` between two Gaussians.

    Tiny negative values from roundoff are clipped to zero.
    """
    if q_from.dim != q_to.dim:
        raise DimensionMismatch(f"dimensions differ: {q_from.dim} vs {q_to.dim}")
    n = q_from.dim
    factor = (q_to.chol, True)
    trace_term = float(np.trace(scipy.linalg.cho_solve(factor, q_from.cov)))
    diff = q_to.mean - q_from.mean
    maha = float(diff @ scipy.linalg.cho_solve(factor, diff))
    value = 0.5 * (trace_term + maha - n + q_to.logdet() - q_from.logdet())
    return max(value, 0.0)
