"""Builtin benchmark scenarios.

A scenario turns a parameter dict and an RNG stream into a sampled truth and
the corresponding measurement problem. Sampling is a pure function of
``(params, rng state)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..filters import MeasurementProblem
from ..gauss import GaussianBelief, as_spd
from ..statlin import MeasurementFn


def wrap_angle(a):
    """Map angles to the half-open interval (-pi, pi]."""
    wrapped = np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped)


def angle_residual(measured, predicted):
    return wrap_angle(np.asarray(measured) - np.asarray(predicted))


def kalman_posterior(prior: GaussianBelief, H, b, R, y) -> GaussianBelief:
    """Closed-form posterior of a linear-Gaussian measurement (covariance form)."""
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    S = H @ prior.cov @ H.T + R
    gain = np.linalg.solve(S, H @ prior.cov).T
    mean = prior.mean + gain @ (np.asarray(y) - H @ prior.mean - b)
    cov = prior.cov - gain @ S @ gain.T
    return GaussianBelief(mean, cov)


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    defaults: dict
    build: Callable[[dict, np.ndarray], MeasurementProblem]
    prior: Callable[[dict], GaussianBelief]
    measure: Callable[[dict, np.ndarray], np.ndarray]
    noise: Callable[[dict], np.ndarray]
    exact_posterior: Optional[Callable[[dict, np.ndarray], GaussianBelief]] = field(default=None)

    def params(self, overrides: Optional[dict] = None) -> dict:
        overrides = dict(overrides or {})
        unknown = set(overrides) - set(self.defaults)
        if unknown:
            raise KeyError(f"unknown parameters for {self.name}: {sorted(unknown)}")
        return {**self.defaults, **overrides}

    def sample(self, params: dict, rng: np.random.Generator):
        """Draw ``(x_true, problem)``: truth from the prior, ``y`` from the model."""
        prior = self.prior(params)
        R = self.noise(params)
        x_true = prior.mean + prior.chol @ rng.standard_normal(prior.dim)
        y = self.measure(params, x_true) + np.linalg.cholesky(R) @ rng.standard_normal(R.shape[0])
        return x_true, self.build(params, y)


# --- LINEAR -----------------------------------------------------------------

def _linear_H(params):
    return np.asarray(params["H"], dtype=np.float64)


def _linear_prior(params):
    return GaussianBelief(params["prior_mean"], params["prior_cov"])


def _linear_noise(params):
    return as_spd(params["R"], "R")


def _linear_measure(params, x):
    return _linear_H(params) @ x


def _linear_build(params, y):
    H = _linear_H(params)
    g = MeasurementFn(lambda x: H @ x, lambda x: H, "linear")
    return MeasurementProblem(g, _linear_noise(params), y, _linear_prior(params))


def _linear_exact(params, y):
    H = _linear_H(params)
    return kalman_posterior(_linear_prior(params), H, np.zeros(H.shape[0]), _linear_noise(params), y)


LINEAR = Scenario(
    "LINEAR",
    "g(x) = H x with n = m = 2; the Kalman posterior is exact",
    {
        "H": [[1.0, 0.5], [-0.3, 1.2]],
        "prior_mean": [1.0, -0.5],
        "prior_cov": [[1.0, 0.3], [0.3, 0.8]],
        "R": [[0.5, 0.1], [0.1, 0.4]],
    },
    _linear_build,
    _linear_prior,
    _linear_measure,
    _linear_noise,
    _linear_exact,
)


# --- CUBIC ------------------------------------------------------------------

def _cubic_prior(params):
    return GaussianBelief([params["prior_mean"]], [[params["prior_var"]]])


def _cubic_noise(params):
    return np.array([[float(params["R"])]])


def _cubic_measure(params, x):
    return params["alpha"] * np.asarray(x) ** 3


def _cubic_build(params, y):
    alpha = params["alpha"]
    g = MeasurementFn(lambda x: alpha * x**3, lambda x: np.array([[3.0 * alpha * x[0] ** 2]]), "cubic")
    return MeasurementProblem(g, _cubic_noise(params), y, _cubic_prior(params))


CUBIC = Scenario(
    "CUBIC",
    "scalar sensor g(x) = alpha x^3, prior N(2, 1)",
    {"alpha": 1.0 / 20.0, "prior_mean": 2.0, "prior_var": 1.0, "R": 1.0},
    _cubic_build,
    _cubic_prior,
    _cubic_measure,
    _cubic_noise,
)


# --- RANGE_BEARING ------------------------------------------------------------

def _rb_prior(params):
    return GaussianBelief(params["prior_mean"], params["prior_cov"])


def _rb_noise(params):
    return np.diag([params["sigma_range"] ** 2, params["sigma_bearing"] ** 2])


def _rb_measure(params, x):
    return np.array([np.hypot(x[0], x[1]), np.arctan2(x[1], x[0])])


def _rb_jacobian(x):
    r2 = x[0] ** 2 + x[1] ** 2
    r = np.sqrt(r2)
    return np.array([[x[0] / r, x[1] / r], [-x[1] / r2, x[0] / r2]])


def _rb_build(params, y):
    y = np.asarray(y, dtype=np.float64).copy()
    y[1] = float(wrap_angle(y[1]))
    bearing_obs = y[1]

    def evaluate(x):
        # predicted bearing is unwrapped onto the branch nearest the observation,
        # so y - g(x) carries the wrapped bearing residual
        z = _rb_measure(params, x)
        z[1] = bearing_obs - float(angle_residual(bearing_obs, z[1]))
        return z

    g = MeasurementFn(evaluate, _rb_jacobian, "range_bearing")
    return MeasurementProblem(g, _rb_noise(params), y, _rb_prior(params))


RANGE_BEARING = Scenario(
    "RANGE_BEARING",
    "2-D position, range and bearing from a sensor at the origin",
    {
        "prior_mean": [-8.0, 0.5],
        "prior_cov": [[2.0, 0.0], [0.0, 2.0]],
        "sigma_range": 0.2,
        "sigma_bearing": 0.05,
    },
    _rb_build,
    _rb_prior,
    _rb_measure,
    _rb_noise,
)


_BUILTINS = {s.name: s for s in (LINEAR, CUBIC, RANGE_BEARING)}


def builtin_scenarios() -> list:
    return list(_BUILTINS.values())


def get_scenario(name: str) -> Scenario:
    try:
        return _BUILTINS[name.upper()]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; available: {sorted(_BUILTINS)}") from None
