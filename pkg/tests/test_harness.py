import json

import numpy as np
import pytest

from slqn import FilterKind, IterationConfig, run_filter
from slqn.harness.cli import main
from slqn.harness.config import ConfigError, RunConfig, VerifyConfig
from slqn.harness.montecarlo import CSV_COLUMNS, run_monte_carlo
from slqn.harness.scenarios import angle_residual, builtin_scenarios, get_scenario, wrap_angle
from slqn.harness.verify import run_verification


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


@pytest.mark.parametrize(
    "rule, omega", [(["--rule", "unscented", "--kappa", "2"], 2.0), (["--rule", "cubature"], 0.0)]
)
def test_cli_linearize_square(capsys, rule, omega):
    code, out, _ = run_cli(capsys, "linearize", "--fn", "square", "--mean", "0", "--cov", "1", *rule)
    assert code == 0
    d = json.loads(out)
    assert abs(d["A"][0][0]) <= 1e-12
    assert abs(d["b"][0] - 1.0) <= 1e-12
    assert abs(d["Omega"][0][0] - omega) <= 1e-12
    assert set(d) == {"A", "b", "Omega", "z_bar", "Psi", "Phi"}


def test_cli_linearize_affine(capsys):
    code, out, _ = run_cli(capsys, "linearize", "--fn", "affine2x1", "--mean", "3", "--cov", "0.4")
    d = json.loads(out)
    assert code == 0
    assert d["A"][0][0] == pytest.approx(2.0, abs=1e-12)
    assert d["b"][0] == pytest.approx(1.0, abs=1e-12)
    assert abs(d["Omega"][0][0]) <= 1e-12


@pytest.mark.parametrize(
    "argv",
    [
        ["linearize", "--fn", "nope", "--mean", "0", "--cov", "1"],
        ["linearize", "--fn", "square", "--mean", "0", "0", "--cov", "1", "2", "3"],
        ["linearize", "--fn", "square", "--mean", "0", "--cov", "1", "--rule", "cubature", "--kappa", "1"],
        ["frobnicate"],
        [],
    ],
)
def test_cli_usage_errors(capsys, argv):
    code, _, err = run_cli(capsys, *argv)
    assert code == 2
    lines = err.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith("error:")


def test_cli_linearize_numerical_failure(capsys):
    code, _, err = run_cli(capsys, "linearize", "--fn", "square", "--mean", "0", "--cov", "-1")
    assert code == 1
    assert err.startswith("error:")


def test_cli_scenarios(capsys):
    code, out, _ = run_cli(capsys, "scenarios")
    assert code == 0
    names = {s["name"] for s in json.loads(out)}
    assert {"LINEAR", "CUBIC", "RANGE_BEARING"} <= names


def test_linear_has_oracle():
    assert get_scenario("LINEAR").exact_posterior is not None
    assert get_scenario("linear") is get_scenario("LINEAR")
    with pytest.raises(KeyError):
        get_scenario("SONAR")


def test_wrap_residual():
    assert float(angle_residual(np.pi - 0.1, -np.pi + 0.1)) == pytest.approx(-0.2, abs=1e-12)
    assert float(angle_residual(-np.pi + 0.1, np.pi - 0.1)) == pytest.approx(0.2, abs=1e-12)
    assert float(wrap_angle(-np.pi)) == pytest.approx(np.pi)
    a = np.linspace(-20, 20, 1001)
    w = wrap_angle(a)
    assert np.all((w > -np.pi) & (w <= np.pi))
    np.testing.assert_allclose(np.cos(w), np.cos(a), atol=1e-12)


def test_range_bearing_across_branch_cut():
    sc = get_scenario("RANGE_BEARING")
    params = sc.params({})
    x = np.array([-8.0, 0.01])
    y = sc.measure(params, np.array([-8.0, -0.01]))  # bearing just below -pi side
    prob = sc.build(params, y)
    r = prob.observation - prob.measure(x)
    assert abs(r[1]) < 0.01


def test_range_bearing_filters_run():
    sc = get_scenario("RANGE_BEARING")
    params = sc.params({})
    for seed in range(10):
        x_true, prob = sc.sample(params, np.random.default_rng(seed))
        for kind in FilterKind:
            trace = run_filter(prob, IterationConfig(), kind)
            assert not trace.diverged
            assert np.linalg.norm(trace.final.mean - x_true) < 3.0


def test_cubic_uninformative_measurement():
    sc = get_scenario("CUBIC")
    params = sc.params({"R": 1e6})
    for seed in range(5):
        _, prob = sc.sample(params, np.random.default_rng(seed))
        for kind in FilterKind:
            trace = run_filter(prob, IterationConfig(), kind)
            assert abs(trace.final.mean[0] - params["prior_mean"]) <= 1e-2


def test_scenario_rejects_unknown_param():
    with pytest.raises(KeyError):
        get_scenario("CUBIC").params({"beta": 1.0})


def test_scenario_sampling_is_pure():
    sc = get_scenario("RANGE_BEARING")
    a = sc.sample(sc.params({}), np.random.default_rng(3))
    b = sc.sample(sc.params({}), np.random.default_rng(3))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1].observation, b[1].observation)


def test_run_config_round_trip():
    raw = {
        "scenario": "cubic", "filters": ["iekf", "iplf"], "rule": {"kind": "unscented", "kappa": 2},
        "kl_tol": 1e-6, "max_iters": 20, "monte_carlo_runs": 10, "seed": 2**64 - 1, "params": {"R": 2.0},
    }
    cfg = RunConfig.from_dict(raw)
    canon = cfg.to_dict()
    assert RunConfig.from_dict(canon) == cfg
    assert RunConfig.from_dict(canon).to_dict() == canon
    assert canon["scenario"] == "CUBIC"


def test_verify_config_round_trip():
    cfg = VerifyConfig.from_dict({"mode": "iukf", "instances": 5, "rules": [{"kind": "cubature"}]})
    assert VerifyConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize(
    "raw",
    [
        {"scenario": "CUBIC", "filters": ["iekf"], "colour": "red"},
        {"scenario": "CUBIC"},
        {"scenario": "CUBIC", "filters": ["ekf"]},
        {"scenario": "CUBIC", "filters": []},
        {"scenario": "MOON", "filters": ["iekf"]},
        {"scenario": "CUBIC", "filters": ["iekf"], "params": {"beta": 1}},
        {"scenario": "CUBIC", "filters": ["iekf"], "seed": -1},
        {"scenario": "CUBIC", "filters": ["iekf"], "seed": 2**64},
        {"scenario": "CUBIC", "filters": ["iekf"], "max_iters": 0},
        {"scenario": "CUBIC", "filters": ["iekf"], "kl_tol": 0},
        {"scenario": "CUBIC", "filters": ["iekf"], "rule": {"kind": "cubature", "kappa": 1}},
        {"scenario": "CUBIC", "filters": ["iekf"], "rule": {"kind": "hermite"}},
        [1, 2],
    ],
)
def test_run_config_rejects(raw):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(raw)


@pytest.mark.parametrize("raw", [{"mode": "iekf"}, {"mode": "iplf", "extra": 1}, {"mode": "iplf", "tol": -1}])
def test_verify_config_rejects(raw):
    with pytest.raises(ConfigError):
        VerifyConfig.from_dict(raw)


def test_cli_filter_bad_config(tmp_path, capsys):
    path = write_json(tmp_path / "c.json", {"scenario": "CUBIC", "filters": ["iekf"], "typo": 1})
    code, _, err = run_cli(capsys, "filter", path)
    assert code == 2 and err.startswith("error:")
    (tmp_path / "broken.json").write_text("{")
    code, _, err = run_cli(capsys, "filter", str(tmp_path / "broken.json"))
    assert code == 2 and err.startswith("error:")
    code, _, err = run_cli(capsys, "filter", str(tmp_path / "missing.json"))
    assert code == 2 and err.startswith("error:")


def test_cli_filter_linear(tmp_path, capsys):
    cfg = {"scenario": "LINEAR", "filters": ["iekf", "qniekf", "qniekf_exact", "iplf", "iukf"],
           "monte_carlo_runs": 100, "seed": 4}
    code, _, _ = run_cli(capsys, "filter", write_json(tmp_path / "lin.json", cfg), "--out", str(tmp_path / "lin"))
    assert code == 0
    report = json.loads((tmp_path / "lin.json").read_text())
    for run in report["runs"]:
        means = np.array(list(run["posterior_means"].values()))
        assert np.abs(means - means[0]).max() <= 1e-9
        np.testing.assert_allclose(means[0], run["exact_mean"], atol=1e-10)
    lines = (tmp_path / "lin.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 100 * 5
    assert all(line.split(",")[2] == "1" for line in lines[1:])


def test_cli_filter_all_diverged(tmp_path, capsys):
    # a stiff sensor with near-zero noise: the undamped Gauss-Newton steps blow up
    cfg = {"scenario": "CUBIC", "filters": ["iekf"], "monte_carlo_runs": 3,
           "params": {"alpha": 1000.0, "R": 1e-12}}
    code, _, err = run_cli(capsys, "filter", write_json(tmp_path / "d.json", cfg), "--out", str(tmp_path / "d"))
    assert code == 1
    assert err.strip() == "error: all runs diverged"
    summary = json.loads((tmp_path / "d.json").read_text())["summary"]["iekf"]
    assert summary["divergence_count"] == 3


def test_cli_filter_csv_format(tmp_path, capsys):
    cfg = {"scenario": "CUBIC", "filters": ["iekf", "iplf"], "monte_carlo_runs": 4}
    code, out, _ = run_cli(capsys, "filter", write_json(tmp_path / "c.json", cfg), "--out",
                           str(tmp_path / "r"), "--format", "csv", "--seed", "9")
    assert code == 0
    assert out == (tmp_path / "r.csv").read_text()
    assert json.loads((tmp_path / "r.json").read_text())["config"]["seed"] == 9


def test_cli_filter_equivalence_section(tmp_path, capsys):
    cfg = {"scenario": "CUBIC", "filters": ["iplf"], "monte_carlo_runs": 10}
    code, _, _ = run_cli(capsys, "filter", write_json(tmp_path / "e.json", cfg), "--out",
                         str(tmp_path / "e"), "--equivalence")
    eq = json.loads((tmp_path / "e.json").read_text())["equivalence"]
    assert code == 0
    assert eq["instances"] == 10 and eq["max_deviation"] <= 1e-8


def test_determinism_across_workers(tmp_path, capsys):
    cfg = {"scenario": "RANGE_BEARING", "filters": ["iekf", "iplf", "iukf", "qniekf_exact"],
           "monte_carlo_runs": 40, "seed": 123}
    path = write_json(tmp_path / "c.json", cfg)
    outputs = []
    for k, workers in enumerate(["1", "8", "1"]):
        assert run_cli(capsys, "filter", path, "--out", str(tmp_path / f"r{k}"), "--workers", workers)[0] == 0
        outputs.append(((tmp_path / f"r{k}.csv").read_bytes(), (tmp_path / f"r{k}.json").read_bytes()))
    assert outputs[0] == outputs[1] == outputs[2]


def test_seed_changes_output():
    base = {"scenario": "CUBIC", "filters": ["iekf"], "monte_carlo_runs": 5}
    a = run_monte_carlo(RunConfig.from_dict({**base, "seed": 1})).to_csv()
    b = run_monte_carlo(RunConfig.from_dict({**base, "seed": 2})).to_csv()
    assert a != b


def test_cli_verify(tmp_path, capsys):
    path = write_json(tmp_path / "v.json", {"mode": "iukf", "instances": 30})
    code, out, _ = run_cli(capsys, "verify", path, "--out", str(tmp_path / "v"))
    assert code == 0
    report = json.loads((tmp_path / "v.json").read_text())
    assert report["instances"] == 30 and len(report["per_instance"]) == 30
    assert report["p_shortcut_max_dev"] <= 1e-12
    assert json.loads(out)["passed"]


def test_cli_verify_impossible_tolerance(tmp_path, capsys):
    path = write_json(tmp_path / "v.json", {"mode": "iplf", "instances": 10, "tol": 0})
    code, _, err = run_cli(capsys, "verify", path, "--out", str(tmp_path / "v"))
    assert code == 3
    assert err.startswith("error:") and len(err.strip().splitlines()) == 1


def test_verify_workers_do_not_change_result():
    cfg = VerifyConfig.from_dict({"mode": "iplf", "instances": 20})
    assert run_verification(cfg, workers=1) == run_verification(cfg, workers=4)


def test_cubic_high_noise_ordering():
    # posterior-linearization beats tangent linearization when noise dominates
    cfg = RunConfig.from_dict({
        "scenario": "CUBIC", "filters": ["iekf", "iplf_prior"], "monte_carlo_runs": 500,
        "seed": 42, "params": {"prior_var": 4.0, "R": 4.0},
    })
    summary = run_monte_carlo(cfg, workers=4).summary
    assert summary["iplf_prior"]["mean_final_error"] <= summary["iekf"]["mean_final_error"]
