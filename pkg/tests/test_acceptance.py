"""Acceptance gate: one test per criterion, each reported as PASS/FAIL in the
terminal summary. Run with ``pytest tests/test_acceptance.py``."""

import json
import time

import numpy as np
import pytest

from slqn import (
    FilterKind,
    GaussianBelief,
    IterationConfig,
    MeasurementFn,
    SigmaPointRule,
    StopReason,
    analytical_linearize,
    compute_p,
    compute_p_iukf,
    frobenius_minimality_witness,
    iekf_iterate,
    iplf_iterate,
    iukf_iterate,
    map_cost,
    map_gradient,
    psb_like_update,
    qn_iekf_iterate,
    run_filter,
    star_forms_agree,
    statistical_linearize,
)
from slqn.harness.cli import main
from slqn.harness.instances import random_problem, random_spd
from slqn.harness.scenarios import get_scenario

from test_bridge import consistent_instance, lin1, scalar_sinv


@pytest.fixture
def criterion(record_property):
    def mark(number, summary):
        record_property("criterion", number)
        record_property("summary", summary)
    return mark


def test_exact_qn_certification(criterion, tmp_path, capsys):
    criterion(1, "verify CLI: IPLF and IUKF updates equal QN-IEKF with derived correction")
    start = time.perf_counter()
    results = {}
    for mode in ("iplf", "iukf"):
        cfg = {"mode": mode, "instances": 200, "rules": [{"kind": "unscented"}, {"kind": "cubature"}],
               "tol": 1e-8, "secant_tol": 1e-10, "max_dim": 4, "max_degree": 3, "seed": 2024}
        path = tmp_path / f"{mode}.json"
        path.write_text(json.dumps(cfg))
        code = main(["verify", str(path), "--out", str(tmp_path / f"{mode}_report")])
        capsys.readouterr()
        results[mode] = (code, json.loads((tmp_path / f"{mode}_report.json").read_text()))
    elapsed = time.perf_counter() - start
    for mode, (code, report) in results.items():
        assert code == 0
        assert report["instances"] >= 200
        assert {json.dumps(e["rule"], sort_keys=True) for e in report["per_instance"]} == {
            '{"kind": "unscented"}', '{"kind": "cubature"}'}
        assert all(e["n"] <= 4 and e["m"] <= 4 for e in report["per_instance"])
        assert report["certified_iterations"] > report["instances"]
        assert report["max_deviation"] <= 1e-8
        assert report["max_secant_residual"] <= 1e-10
    assert results["iukf"][1]["p_shortcut_max_dev"] <= 1e-12
    assert elapsed <= 30.0


def test_star_identity(criterion):
    criterion(2, "(*) factor: direct and simplified forms agree")
    rng = np.random.default_rng(2)
    assert max(star_forms_agree(*consistent_instance(rng)) for _ in range(500)) <= 1e-9
    hand = (np.eye(1), np.eye(1), lin1(omega=2.0), np.eye(1), scalar_sinv(1.0, 1.0, 1.0, 2.0))
    from slqn.bridge import star_direct, star_simplified

    assert abs(star_direct(*hand)[0, 0] - 0.5) <= 1e-12
    assert abs(star_simplified(*hand)[0, 0] - 0.5) <= 1e-12


def test_psb_update(criterion):
    criterion(3, "PSB-like update: symmetric, secant-exact, Frobenius-minimal")
    rng = np.random.default_rng(3)
    for k in range(1000):
        n = int(rng.integers(1, 7))
        T_prev = rng.standard_normal((n, n))
        T_prev = T_prev + T_prev.T
        s = rng.standard_normal(n) * 10 ** rng.uniform(-3, 2)
        p = rng.standard_normal(n) * 10 ** rng.uniform(-3, 2)
        T = psb_like_update(T_prev, s, p)
        assert np.array_equal(T, T.T)
        assert np.linalg.norm(T @ s - p) <= 1e-10 * (1 + np.linalg.norm(p))
        assert frobenius_minimality_witness(T_prev, s, p, trials=100, seed=k)


def test_fixed_covariance_reduction(criterion):
    criterion(4, "fixed-covariance p reduces to the shortcut; scalar family monotone")
    rng = np.random.default_rng(4)
    for _ in range(500):
        P, P_i, lin, R, S = consistent_instance(rng, prior_gain=True)
        eps = rng.standard_normal(lin.A.shape[0])
        full, short = compute_p(P, P_i, lin, R, S, eps), compute_p_iukf(lin, R, S, eps)
        assert np.max(np.abs(full - short)) <= 1e-12

    def family(R, omega):
        p = compute_p_iukf(lin1(omega=omega), np.array([[R]]), scalar_sinv(1.0, 1.0, R, omega), [1.0])
        assert abs(p[0] - omega / (R * (1 + R + omega))) <= 1e-12
        return abs(p[0])

    assert abs(family(1.0, 2.0) - 0.5) <= 1e-12
    by_R = [family(R, 2.0) for R in (0.25, 0.5, 1.0, 2.0, 4.0)]
    by_omega = [family(1.0, om) for om in (0.0, 1.0, 2.0, 4.0)]
    assert all(a > b for a, b in zip(by_R, by_R[1:]))
    assert all(a < b for a, b in zip(by_omega, by_omega[1:]))


def test_linear_exactness(criterion):
    criterion(5, "LINEAR scenario: every filter is the Kalman posterior, KL stop at iteration 1")
    sc = get_scenario("LINEAR")
    params = sc.params({})
    cfg = IterationConfig()
    for seed in range(20):
        _, prob = sc.sample(params, np.random.default_rng(seed))
        exact = sc.exact_posterior(params, prob.observation)
        x0 = prob.x_hat
        lin = analytical_linearize(prob.g, x0)
        qn = qn_iekf_iterate(prob, x0, 0, lin)
        first = {
            "iekf": (iekf_iterate(prob, x0), qn[1]),
            "qniekf": qn,
            "iplf": (lambda it: (it.x_next, it.P_next))(iplf_iterate(prob, x0, prob.P, cfg.rule)),
            "iukf": (lambda it: (it.x_next, it.P_next))(iukf_iterate(prob, x0, cfg.rule)),
        }
        for mean, cov in first.values():
            assert np.max(np.abs(mean - exact.mean)) <= 1e-10
            assert np.max(np.abs(cov - exact.cov)) <= 1e-10
        for kind in (FilterKind.IEKF, FilterKind.QNIEKF, FilterKind.IPLF, FilterKind.IUKF):
            trace = run_filter(prob, cfg, kind)
            assert trace.reason is StopReason.KL_TOL and trace.iterations == 1
            assert np.max(np.abs(trace.final.mean - exact.mean)) <= 1e-10
            assert np.max(np.abs(trace.final.cov - exact.cov)) <= 1e-10


def test_statistical_linearization(criterion):
    criterion(6, "statistical linearization: affine recovery and the x^2 cases")
    rng = np.random.default_rng(6)
    rules = (SigmaPointRule.unscented(), SigmaPointRule.unscented(2.0), SigmaPointRule.cubature())
    for _ in range(200):
        n, m = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        A, b = rng.standard_normal((m, n)), rng.standard_normal(m)
        g = MeasurementFn(lambda x, A=A, b=b: A @ x + b)
        dens = GaussianBelief(rng.standard_normal(n), random_spd(rng, n))
        for rule in rules:
            if rule.kind == "unscented" and n + rule.kappa_for(n) <= 0:
                continue
            lin, _ = statistical_linearize(g, dens, rule)
            assert np.linalg.norm(lin.A - A) <= 1e-9
            assert np.linalg.norm(lin.b - b) <= 1e-9
            assert np.linalg.norm(lin.Omega) <= 1e-9
    square = MeasurementFn(lambda x: x**2)
    for rule, omega in ((SigmaPointRule.unscented(2.0), 2.0), (SigmaPointRule.cubature(), 0.0)):
        lin, _ = statistical_linearize(square, GaussianBelief([0.0], [[1.0]]), rule)
        assert abs(lin.A[0, 0]) <= 1e-12
        assert abs(lin.b[0] - 1.0) <= 1e-12
        assert abs(lin.Omega[0, 0] - omega) <= 1e-12


def test_optimization_plumbing(criterion):
    criterion(7, "MAP gradient vs finite differences; information/covariance gain identity")
    rng = np.random.default_rng(7)
    for _ in range(100):
        prob, _, _ = random_problem(rng)
        x = prob.x_hat + 0.3 * rng.standard_normal(prob.n)
        grad = map_gradient(prob, x)
        fd = np.empty(prob.n)
        for j in range(prob.n):
            e = np.zeros(prob.n)
            e[j] = 1e-6 * (1 + abs(x[j]))
            fd[j] = (map_cost(prob, x + e) - map_cost(prob, x - e)) / (2 * e[j])
        assert np.linalg.norm(grad - fd) <= 1e-6 * (1 + np.linalg.norm(grad))
    for _ in range(500):
        n, m = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        P, R, H = random_spd(rng, n), random_spd(rng, m), rng.standard_normal((m, n))
        info = np.linalg.solve(H.T @ np.linalg.solve(R, H) + np.linalg.inv(P), H.T @ np.linalg.inv(R))
        cov = P @ H.T @ np.linalg.inv(H @ P @ H.T + R)
        assert np.linalg.norm(info - cov) <= 1e-9 * (1 + np.linalg.norm(cov))


def test_harness_determinism(criterion, tmp_path, capsys):
    criterion(8, "filter CLI output byte-identical across reruns and worker counts")
    cfg = {"scenario": "CUBIC", "filters": ["iekf", "qniekf", "qniekf_exact", "iplf", "iukf"],
           "monte_carlo_runs": 100, "seed": 42, "params": {"R": 2.0}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    blobs = []
    for k, workers in enumerate(("1", "1", "8", "8")):
        stem = tmp_path / f"run{k}"
        assert main(["filter", str(path), "--out", str(stem), "--workers", workers]) == 0
        blobs.append((stem.with_suffix(".csv").read_bytes(), stem.with_suffix(".json").read_bytes()))
    capsys.readouterr()
    assert all(blob == blobs[0] for blob in blobs)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
