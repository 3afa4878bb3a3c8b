"""
End-to-end tests for the riskgrid command line
"""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from apps.cli import cli
from core.schemas import ExperimentConfig, GridSpec

DATA = Path(__file__).resolve().parents[2] / "data"


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def config_file(tmp_path):
    cfg = ExperimentConfig(
        seed=5,
        configs=2,
        episodes=3,
        outer_iters=2,
        grid=GridSpec(width=5, height=5, obstacles=[], n_waypoints=2, n_transmission=1),
        gammas=[0.0, 1.0],
        test_set_size=3,
        fresh_configs=2,
        eval_episodes=5,
        trajectory_episodes=1,
        output_dir=str(tmp_path / "run"),
    )
    path = tmp_path / "config.json"
    path.write_text(cfg.model_dump_json(indent=2))
    return path


@pytest.mark.e2e
class TestExactCommand:
    def test_mdp_file(self, runner, tmp_path):
        result = runner.invoke(cli, ["exact", "--mdp", str(DATA / "mdps" / "three_state.json"),
                                     "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert "restart value 3.500000" in result.output
        report = json.loads((tmp_path / "exact_report.json").read_text())
        assert report["value"][0] == pytest.approx(2.0, abs=1e-7)

    def test_mdp_file_goes_through_loader(self, runner, tmp_path, monkeypatch):
        import apps.cli as cli_module

        loaded = []
        real = cli_module.load_mdp
        monkeypatch.setattr(cli_module, "load_mdp", lambda path: loaded.append(path) or real(path))
        result = runner.invoke(cli, ["exact", "--mdp", str(DATA / "mdps" / "three_state.json"),
                                     "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert loaded == [str(DATA / "mdps" / "three_state.json")]

    def test_instance_file(self, runner, tmp_path):
        result = runner.invoke(cli, ["exact", "--instance", str(DATA / "instances" / "corridor_3x3.json"),
                                     "--spec", '{"base": "worst_case", "batch_size": 2}',
                                     "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert "worst_case[N=2]" in result.output
        assert (tmp_path / "exact_report.json").exists()

    def test_needs_exactly_one_input(self, runner):
        assert runner.invoke(cli, ["exact"]).exit_code == 2

    def test_bad_spec_json(self, runner, tmp_path):
        result = runner.invoke(cli, ["exact", "--mdp", str(DATA / "mdps" / "three_state.json"),
                                     "--spec", '{"base": "entropic"}', "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_spec_out_of_range(self, runner, tmp_path):
        result = runner.invoke(cli, ["exact", "--mdp", str(DATA / "mdps" / "three_state.json"),
                                     "--spec", '{"base": "worst_case", "batch_size": 0}', "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_invalid_mdp_file(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"n_states": 2, "transitions": [[0, 0, 1, 0.4], [1, 0, 1, 1.0]],
                                   "discount": 0.9}))
        result = runner.invoke(cli, ["exact", "--mdp", str(bad), "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_log_level_option(self, runner, tmp_path):
        import logging

        from core.logging import configure, logger

        try:
            result = runner.invoke(cli, ["--log-level", "debug", "exact", "--mdp",
                                         str(DATA / "mdps" / "three_state.json"), "--out", str(tmp_path)])
            assert result.exit_code == 0, result.output
            assert logger.level == logging.DEBUG
        finally:
            configure()

    def test_numerical_failure(self, runner, tmp_path):
        result = runner.invoke(cli, ["exact", "--mdp", str(DATA / "mdps" / "three_state.json"),
                                     "--tol", "-1", "--out", str(tmp_path)])
        assert result.exit_code == 3


@pytest.mark.e2e
class TestExperimentCommands:
    def test_train_improve_evaluate(self, runner, config_file, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(cli, ["train", "--config", str(config_file), "--label", "averse"])
        assert result.exit_code == 0, result.output
        assert (out / "iterates_averse.csv").exists()
        theta = out / "theta_averse.json"
        assert len(json.loads(theta.read_text())["theta"]) == 28

        result = runner.invoke(cli, ["improve", "--config", str(config_file), "--theta", str(theta)])
        assert result.exit_code == 0, result.output
        gammas = json.loads((out / "gammas_averse.json").read_text())
        assert set(gammas["gamma"]) == {"0", "1"}
        assert set(gammas["gamma"].values()) <= {0.0, 1.0}

        result = runner.invoke(cli, ["evaluate", "--config", str(config_file), "--gamma", "1"])
        assert result.exit_code == 0, result.output
        assert (out / "stats_gamma_1.csv").exists()

        result = runner.invoke(cli, ["evaluate", "--config", str(config_file)])
        assert result.exit_code == 0, result.output
        assert (out / "stats_initial.csv").exists()

    def test_compare_and_report(self, runner, config_file, tmp_path):
        result = runner.invoke(cli, ["compare", "--config", str(config_file)])
        assert result.exit_code == 0, result.output
        assert "COMPARISON" in result.output
        assert "risk_averse: improved on" in result.output

        result = runner.invoke(cli, ["report", "--out", str(tmp_path / "run")])
        assert result.exit_code == 0, result.output
        assert "Config 0: gamma" in result.output

    def test_overrides_on_command_line(self, runner, config_file, tmp_path):
        out = tmp_path / "other"
        result = runner.invoke(cli, ["train", "--config", str(config_file), "--out", str(out), "--iters", "1",
                                     "--spec", '{"base": "expectation"}'])
        assert result.exit_code == 0, result.output
        assert "expectation[N=1]" in result.output
        payload = json.loads((out / "theta_train.json").read_text())
        assert payload["spec"]["base"] == "expectation"

    def test_invalid_config_file(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"seed": 1, "params": {"discount": 1.5}}))
        result = runner.invoke(cli, ["train", "--config", str(bad)])
        assert result.exit_code == 2

    def test_unknown_config_key(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"seed": 1, "colour": "blue"}))
        assert runner.invoke(cli, ["compare", "--config", str(bad)]).exit_code == 2

    def test_negative_seed_rejected(self, runner, config_file):
        assert runner.invoke(cli, ["train", "--config", str(config_file), "--seed", "-1"]).exit_code == 2

    def test_compare_is_deterministic(self, runner, config_file, tmp_path):
        for name in ("a", "b"):
            result = runner.invoke(cli, ["compare", "--config", str(config_file), "--out", str(tmp_path / name)])
            assert result.exit_code == 0, result.output
        for name in ("stats.csv", "trajectories_initial.csv", "trajectories_risk_averse.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
