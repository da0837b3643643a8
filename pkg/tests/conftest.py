import numpy as np
import pytest

from slqn import GaussianBelief, MeasurementFn, MeasurementProblem
from slqn.harness.instances import random_spd


def scalar_problem(f, df, y, R=1.0, mean=0.0, var=1.0):
    g = MeasurementFn(lambda x: f(x), lambda x: np.atleast_2d(df(x)))
    return MeasurementProblem(g, np.array([[R]]), np.array([y]), GaussianBelief([mean], [[var]]))


def linear_problem(rng, n, m):
    H = rng.standard_normal((m, n))
    g = MeasurementFn(lambda x: H @ x, lambda x: H, "linear")
    prior = GaussianBelief(rng.standard_normal(n), random_spd(rng, n))
    R = random_spd(rng, m, 0.2, 1.5)
    y = rng.standard_normal(m)
    return MeasurementProblem(g, R, y, prior), H


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, in criterion order."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            props = dict(rep.user_properties)
            if "criterion" in props:
                lines.append((props["criterion"], props.get("summary", ""), "PASS" if rep.passed else "FAIL"))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, summary, status in sorted(lines):
        terminalreporter.write_line(f"criterion {number}: {status}  {summary}")
