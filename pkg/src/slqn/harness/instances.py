"""Random polynomial measurement problems for certification and property tests."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..filters import MeasurementProblem
from ..gauss import GaussianBelief
from ..statlin import MeasurementFn

MAX_COND = 1e6


@dataclass(frozen=True)
class PolynomialMap:
    """``g_k(x) = sum_j coef[k, j] * prod_l x_l ** exps[j, l]``."""

    exps: np.ndarray  # (terms, n) non-negative integer exponents
    coef: np.ndarray  # (m, terms)

    @property
    def n(self) -> int:
        return self.exps.shape[1]

    @property
    def m(self) -> int:
        return self.coef.shape[0]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.coef @ np.prod(x[None, :] ** self.exps, axis=1)

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        jac = np.zeros((self.m, self.n))
        for l in range(self.n):
            reduced = self.exps.copy()
            factor = reduced[:, l].astype(np.float64)
            reduced[:, l] = np.maximum(reduced[:, l] - 1, 0)
            jac[:, l] = self.coef @ (factor * np.prod(x[None, :] ** reduced, axis=1))
        return jac

    def as_measurement(self, name: str = "poly") -> MeasurementFn:
        return MeasurementFn(self.__call__, self.jacobian, name)


def monomials(n: int, degree: int) -> np.ndarray:
    """All exponent vectors of total degree ``<= degree``, constant term first."""
    exps = [e for e in itertools.product(range(degree + 1), repeat=n) if sum(e) <= degree]
    exps.sort(key=lambda e: (sum(e), tuple(-v for v in e)))
    return np.array(exps, dtype=np.int64).reshape(-1, n)


def random_spd(rng: np.random.Generator, d: int, low: float = 0.1, high: float = 2.0) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    vals = rng.uniform(low, high, size=d)
    return (q * vals) @ q.T


def random_polynomial(rng: np.random.Generator, n: int, m: int, degree: int, scale: float = 0.3) -> PolynomialMap:
    exps = monomials(n, degree)
    total = exps.sum(axis=1)
    # shrink higher-order terms so iterations stay in a sane regime
    std = np.where(total <= 1, 1.0, scale ** (total - 1))
    coef = rng.standard_normal((m, exps.shape[0])) * std[None, :]
    return PolynomialMap(exps, coef)


def random_problem(
    rng: np.random.Generator,
    max_dim: int = 4,
    max_degree: int = 3,
    n: int | None = None,
    m: int | None = None,
    degree: int | None = None,
):
    """Sample ``(problem, x_true, poly)``; resamples covariances with cond > 1e6."""
    n = int(rng.integers(1, max_dim + 1)) if n is None else n
    m = int(rng.integers(1, max_dim + 1)) if m is None else m
    degree = int(rng.integers(1, max_degree + 1)) if degree is None else degree
    poly = random_polynomial(rng, n, m, degree)
    while True:
        P = random_spd(rng, n, 0.1, 1.5)
        R = random_spd(rng, m, 0.05, 1.0)
        if np.linalg.cond(P) <= MAX_COND and np.linalg.cond(R) <= MAX_COND:
            break
    x_hat = rng.standard_normal(n)
    x_true = x_hat + np.linalg.cholesky(P) @ rng.standard_normal(n)
    y = poly(x_true) + np.linalg.cholesky(R) @ rng.standard_normal(m)
    problem = MeasurementProblem(poly.as_measurement(), R, y, GaussianBelief(x_hat, P))
    return problem, x_true, poly
