import json
import typing
from fractions import Fraction
from pathlib import Path

import pytest

from app.models import ExperimentConfig, ExperimentInfo
from app.services.experiment_service import (
    ALL,
    EXPERIMENTS,
    Experiment,
    ExperimentRunner,
    ParameterError,
    Params,
    UnknownExperimentError,
    get_experiment,
)

EXPECTED_IDS = [
    "tv-curves",
    "ltc-families",
    "discrete-link",
    "ex-0-1",
    "rotation",
    "counter-1",
    "counter-2",
    "nonexpansive",
    "ltc-prime",
    "inequalities",
]


def run(experiment_id, out_dir=None, **params):
    config = ExperimentConfig(experiment_id=experiment_id, params=params, out_dir=str(out_dir) if out_dir else None)
    return ExperimentRunner().run(config)


def test_registry_order_and_listing():
    assert list(EXPERIMENTS) == EXPECTED_IDS
    listed = ExperimentRunner().experiments()
    assert [info.id for info in listed] == EXPECTED_IDS
    assert all(info.anchor for info in listed)
    assert len(ExperimentRunner().resolve(ALL)) == len(EXPECTED_IDS)


def test_unknown_experiment():
    with pytest.raises(UnknownExperimentError) as info:
        get_experiment("ex-9")
    assert "ex-0-1" in str(info.value)
    with pytest.raises(UnknownExperimentError):
        run("ex-9")


def test_unknown_parameter_is_rejected():
    with pytest.raises(ParameterError):
        ExperimentRunner().params_for(get_experiment("ex-0-1"), {"bogus": 1})


def test_ex_0_1_writes_its_artifacts(tmp_path):
    [result] = run("ex-0-1", tmp_path / "out", ks="1,5")
    assert result.passed
    assert {check.name for check in result.checks} == {"indicator-values", "unit-shift-swaps-parity"}
    directory = tmp_path / "out" / "ex-0-1"
    for name in ("values.csv", "summary.txt", "config.json", "checks.csv", "README.md"):
        assert (directory / name).exists()
    assert (directory / "values.csv").read_text().splitlines()[0] == "k,V_mu,V_nu,V_mu_shifted"
    summary = (directory / "summary.txt").read_text()
    assert summary.startswith("experiment: ex-0-1\nreproduces: ")
    assert "[PASS] indicator-values" in summary
    config = json.loads((directory / "config.json").read_text())
    assert config["params"]["ks"] == "1,5"
    assert config["seed"] == 20240617


def test_text_summary_skips_the_checks_table(tmp_path):
    config = ExperimentConfig(experiment_id="ex-0-1", params={"ks": "1"}, out_dir=str(tmp_path), report_format="text-summary")
    [result] = ExperimentRunner().run(config)
    assert result.passed
    assert not (tmp_path / "ex-0-1" / "checks.csv").exists()
    assert (tmp_path / "ex-0-1" / "summary.txt").exists()


def test_default_out_dir_comes_from_the_environment(tmp_path):
    [result] = run("ex-0-1", ks="1")
    assert Path(result.artifacts[0]).parent == tmp_path / "results" / "ex-0-1"


def test_discrete_link_small_run(tmp_path):
    [result] = run("discrete-link", tmp_path, samples=5, uniform_k="1,3")
    assert result.passed
    assert all(check.passed for check in result.checks)


def test_replay_is_byte_identical(tmp_path):
    run("discrete-link", tmp_path / "first", samples=5)
    run("discrete-link", tmp_path / "second", samples=5)
    first = (tmp_path / "first" / "discrete-link" / "identity.csv").read_bytes()
    second = (tmp_path / "second" / "discrete-link" / "identity.csv").read_bytes()
    assert first == second


def test_seed_changes_the_samples(tmp_path):
    runner = ExperimentRunner()
    runner.run(ExperimentConfig(experiment_id="discrete-link", params={"samples": 5}, out_dir=str(tmp_path / "a"), seed=1))
    runner.run(ExperimentConfig(experiment_id="discrete-link", params={"samples": 5}, out_dir=str(tmp_path / "b"), seed=2))
    first = (tmp_path / "a" / "discrete-link" / "identity.csv").read_bytes()
    second = (tmp_path / "b" / "discrete-link" / "identity.csv").read_bytes()
    assert first != second


def test_ltc_prime_small_run(tmp_path):
    [result] = run("ltc-prime", tmp_path, ns="2,3,4")
    assert result.passed
    names = {check.name for check in result.checks}
    assert {"comb-2-lower-bound", "sliver-4", "sup-stays-large-4", "rational-shifts-vanish"} <= names


def test_ltc_prime_guards_large_factorials():
    with pytest.raises(ParameterError):
        run("ltc-prime", ns="2,6")


def test_rotation_small_run(tmp_path):
    [result] = run("rotation", tmp_path, horizons="10", rk4_horizon=5.0, reachable_t="1")
    assert result.passed
    header = (tmp_path / "rotation" / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,y1,y2,u"


def test_config_file_layers_under_overrides(tmp_path):
    config_file = tmp_path / "experiments.json"
    config_file.write_text(json.dumps({"experiments": {"ex-0-1": {"ks": "1", "shift": 2.0}}}))
    runner = ExperimentRunner()
    runner.config_file = str(config_file)
    params = runner.params_for(get_experiment("ex-0-1"), {"shift": 1.0})
    assert params == {"ks": "1", "shift": 1.0}
    config_file.write_text(json.dumps({"experiments": {"ex-0-1": {"depth": 3}}}))
    with pytest.raises(ParameterError):
        runner.params_for(get_experiment("ex-0-1"), {})


def test_params_parsing():
    p = Params({"a": "1, 2,3", "b": [0.5, "1.5"], "c": "1/2,1/3", "d": "yes", "e": False, "f": "x"})
    assert p.integers("a") == (1, 2, 3)
    assert p.numbers("b") == (0.5, 1.5)
    assert p.fractions("c") == (Fraction(1, 2), Fraction(1, 3))
    assert p.flag("d") is True
    assert p.flag("e") is False
    assert p.names("a") == ("1", "2", "3")
    assert p.numbers("a") == (1.0, 2.0, 3.0)
    with pytest.raises(ParameterError):
        p.number("f")
    with pytest.raises(ParameterError):
        p.integer("missing")


def test_run_all_rejects_overrides():
    with pytest.raises(ParameterError):
        run(ALL, ks="1")


def test_runner_resolves_its_annotations():
    runner = ExperimentRunner()
    assert not hasattr(runner, "list")
    hints = typing.get_type_hints(ExperimentRunner.resolve)
    assert hints["return"] == list[Experiment]
    assert typing.get_type_hints(ExperimentRunner.experiments)["return"] == list[ExperimentInfo]


def test_tv_curves_small_run(tmp_path):
    [result] = run("tv-curves", tmp_path, uniform_k="2", rates="1", exponential_s="0.5,2", comb_k=2, s_points=5)
    assert result.passed, [check.name for check in result.checks if not check.passed]
    lines = (tmp_path / "tv-curves" / "curve-uniform-2.csv").read_text().splitlines()
    assert lines[0] == "s,tv,method"
    assert len(lines) == 6


def test_ltc_families_small_run(tmp_path):
    [result] = run("ltc-families", tmp_path, k_max=6, mean_threshold=2.0)
    assert result.passed, [check.name for check in result.checks if not check.passed]
    rows = (tmp_path / "ltc-families" / "ltc.csv").read_text().splitlines()
    assert len(rows) == 1 + 4 * 6


def test_counter_1_small_run(tmp_path):
    [result] = run("counter-1", tmp_path, catalog_horizons="1", t_grid="0,1,5")
    assert result.passed, [check.name for check in result.checks if not check.passed]
    assert {"late-uniform-floor", "vstar-floor", "fixed-rate-bound", "fixed-rate-not-ltc"} == {
        check.name for check in result.checks
    }


def test_counter_2_small_run(tmp_path):
    [result] = run(
        "counter-2", tmp_path, ks="10", catalog_horizons="1,5", t_grid="0,25,125"
    )
    assert result.passed, [check.name for check in result.checks if not check.passed]
    lines = (tmp_path / "counter-2" / "witness.csv").read_text().splitlines()
    assert lines[:3] == ["t,y1,u", "0,0,1", "5,5,-1"]
    assert lines[-1].endswith(",-1")


def test_nonexpansive_small_run(tmp_path):
    [result] = run("nonexpansive", tmp_path, sample_pairs=50, contraction_pairs=5, T=2.0)
    assert result.passed, [check.name for check in result.checks if not check.passed]
    assert "nonexpansive-expanding" in {check.name for check in result.checks}


def test_inequalities_small_run(tmp_path):
    [result] = run(
        "inequalities",
        tmp_path,
        hahn_cases=100,
        gamma_cases=20,
        t_values="0,1",
        systems="stable-point,rotation,relax-to-one,bang-cost,constant-cost",
        catalog_horizons="1",
        subadditivity_n=5,
        sandwich_ks="20,40",
    )
    assert result.passed, [check.name for check in result.checks if not check.passed]
    names = {check.name for check in result.checks}
    assert {"hahn-bound", "shift-inequality", "gamma-shift", "sandwich-bang-cost-near"} <= names
