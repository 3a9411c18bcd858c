"""
Tests for the CLI module.
"""

import json
from dataclasses import replace
from unittest.mock import MagicMock, patch

import numpy as np
import pandas as pd
import pytest
from typer.testing import CliRunner

from srusk.cli import app, sweep_workers
from srusk.constraints import ConstraintAlgorithm, Termination, TerminationKind
from srusk.exceptions import ConfigError, ProjectionFailedError, VectorFieldUndeterminedError
from srusk.integrator import Trajectory
from srusk.models import builtin
from srusk.unified import UnifiedPoint

runner = CliRunner()


def test_analyze_writes_chain_report(tmp_path):
    """Test analyze on a regular model with a report file."""
    report_path = tmp_path / "chain.json"

    result = runner.invoke(app, ["analyze", "-m", "harmonic", "--sample-count", "4", "-o", str(report_path)])

    assert result.exit_code == 0
    report = json.loads(report_path.read_text())
    assert report["level_sizes"] == [1]
    assert report["termination"] == "AllDetermined"
    assert "AllDetermined" in result.stdout


def test_analyze_gauge_freedom():
    result = runner.invoke(app, ["analyze", "-m", "singular_toy", "--sample-count", "4"])

    assert result.exit_code == 0
    assert "GaugeFreedom (dim 1)" in result.stdout


def test_analyze_level_cap_exit_code():
    result = runner.invoke(app, ["analyze", "-m", "wave", "--max-levels", "1", "--sample-count", "4"])

    assert result.exit_code == 3
    assert "MaxLevelsReached" in result.stdout


@patch("srusk.cli.Pipeline.analyze")
def test_analyze_inconsistent_exit_code(mock_analyze):
    """Test the exit code of an inconsistent chain."""
    chain = ConstraintAlgorithm(builtin("harmonic"), sample_count=2).run()
    mock_analyze.return_value = replace(chain, termination=Termination(TerminationKind.INCONSISTENT))

    result = runner.invoke(app, ["analyze", "-m", "harmonic"])

    assert result.exit_code == 2
    assert "Inconsistent" in result.stdout
    mock_analyze.assert_called_once()


def test_analyze_with_set_overrides(tmp_path):
    report_path = tmp_path / "wave.json"

    result = runner.invoke(app, [
        "analyze", "-m", "wave", "--set", "model.N=2", "--set", "model.sigma=linear",
        "--sample-count", "4", "-o", str(report_path),
    ])

    assert result.exit_code == 0
    report = json.loads(report_path.read_text())
    assert report["level_sizes"] == [3, 1, 1]
    assert report["model"] == "wave[N=2]"


def test_analyze_is_deterministic(tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"

    for path in (first, second):
        result = runner.invoke(app, ["analyze", "-m", "wave", "--seed", "5", "--sample-count", "4", "-o", str(path)])
        assert result.exit_code == 0

    assert first.read_text() == second.read_text()


def test_integrate_writes_trajectory(tmp_path):
    """Test integrate on the harmonic oscillator with a CSV file."""
    csv_path = tmp_path / "harmonic.csv"

    result = runner.invoke(app, [
        "integrate", "-m", "harmonic", "--step", "0.01", "--t-end", "0.1", "--sample-count", "4",
        "-o", str(csv_path),
    ])

    assert result.exit_code == 0
    assert "Final q:" in result.stdout
    df = pd.read_csv(csv_path)
    assert len(df) == 11
    assert df["q0"].iloc[-1] == pytest.approx(0.9950041652780258, abs=1e-8)


def test_integrate_without_lambda_rule_fails():
    result = runner.invoke(app, ["integrate", "-m", "singular_toy", "--sample-count", "4", "--t-end", "0.01"])

    assert result.exit_code == 1
    assert "Error:" in result.stdout

    # Debug mode re-raises
    result = runner.invoke(app, ["integrate", "-m", "singular_toy", "--sample-count", "4", "--debug"])
    assert result.exit_code == 1
    assert isinstance(result.exception, VectorFieldUndeterminedError)


@patch("srusk.cli.Integrator.run")
def test_integrate_projection_failure_exit_code(mock_run):
    mock_run.side_effect = ProjectionFailedError("projection failed at t=0.5")

    result = runner.invoke(app, ["integrate", "-m", "harmonic", "--sample-count", "4"])

    assert result.exit_code == 4
    assert "projection failed" in result.stdout


def test_verify_passes_on_free_particle():
    result = runner.invoke(app, ["verify", "-m", "free_particle", "--points", "3", "--sample-count", "4"])

    assert result.exit_code == 0
    assert "All 14 invariants passed" in result.stdout


def test_verify_reports_failing_check():
    result = runner.invoke(app, [
        "verify", "-m", "wave", "--rank-tol", "10", "--max-levels", "2", "--points", "3", "--sample-count", "4",
    ])

    assert result.exit_code == 5
    assert "hessian_kernel" in result.stdout
    assert "Failed invariants" in result.stdout


def test_legendre_regular():
    result = runner.invoke(app, ["legendre", "-m", "harmonic", "--q", "0.5", "--v", "2.0"])

    assert result.exit_code == 0
    assert "Regularity: Regular" in result.stdout
    assert "p = dL/dv = [2.]" in result.stdout
    assert "H(t, q, p) = 2.125" in result.stdout


def test_legendre_singular():
    result = runner.invoke(app, ["legendre", "-m", "singular_toy", "--q", "0,0", "--v", "1,2"])

    assert result.exit_code == 0
    assert "Regularity: Singular" in result.stdout
    assert "Kernel direction" in result.stdout
    assert "H(t, q, p)" not in result.stdout


def test_legendre_bad_vector():
    result = runner.invoke(app, ["legendre", "-m", "harmonic", "--q", "a,b"])

    assert result.exit_code == 1


def test_missing_config_file():
    result = runner.invoke(app, ["analyze", "-c", "does-not-exist.toml"])

    assert result.exit_code == 1
    assert "config file not found" in result.stdout


def test_unknown_model():
    result = runner.invoke(app, ["analyze", "-m", "pendulum"])

    assert result.exit_code == 1
    assert "pendulum" in result.stdout


def test_sweep_runs_every_config(tmp_path):
    harmonic = tmp_path / "harmonic.toml"
    harmonic.write_text('[model]\nname = "harmonic"\n\n[analysis]\nsample_count = 4\n')
    capped = tmp_path / "capped.json"
    capped.write_text(json.dumps({"model": {"name": "wave"}, "analysis": {"max_levels": 1, "sample_count": 4}}))

    result = runner.invoke(app, ["analyze", "--sweep", str(harmonic), "--sweep", str(capped)],
                           env={"SRUSK_THREADS": "2"})

    assert result.exit_code == 3
    assert "harmonic.toml" in result.stdout
    assert "capped.json" in result.stdout


def test_sweep_workers(monkeypatch):
    monkeypatch.setenv("SRUSK_THREADS", "3")
    assert sweep_workers(10) == 3

    monkeypatch.setenv("SRUSK_THREADS", "many")
    with pytest.raises(ConfigError):
        sweep_workers(10)

    monkeypatch.delenv("SRUSK_THREADS")
    assert 1 <= sweep_workers(2) <= 2


def write_sweep_configs(tmp_path):
    first = tmp_path / "first.toml"
    first.write_text('[model]\nname = "harmonic"\n\n[outputs]\nchain_report_json = "first.json"\n')
    second = tmp_path / "second.json"
    second.write_text(json.dumps({"model": {"name": "free_particle"}, "analysis": {"sample_count": 12}}))
    return str(first), str(second)


@patch("srusk.cli.analyze_config")
def test_sweep_applies_flags_and_set_overrides(mock_analyze, tmp_path):
    """Dedicated flags and --set reach every config of a sweep."""
    mock_analyze.return_value = 0
    first, second = write_sweep_configs(tmp_path)

    result = runner.invoke(app, [
        "analyze", "--sweep", first, "--sweep", second, "--sample-count", "4", "--set", "analysis.sample_box=0.25",
    ])

    assert result.exit_code == 0
    configs = {call.args[0].model.name: call.args[0] for call in mock_analyze.call_args_list}
    assert sorted(configs) == ["free_particle", "harmonic"]
    for config in configs.values():
        assert config.analysis.sample_count == 4
        assert config.analysis.sample_box == 0.25
    assert configs["harmonic"].outputs.chain_report_json == "first.json"


@patch("srusk.cli.analyze_config")
def test_sweep_ignores_output_flags(mock_analyze, tmp_path):
    mock_analyze.return_value = 0
    first, second = write_sweep_configs(tmp_path)

    result = runner.invoke(app, ["analyze", "--sweep", first, "--sweep", second, "-o", str(tmp_path / "x.json")])

    assert result.exit_code == 0
    assert "Output path flags are ignored" in result.stdout
    configs = {call.args[0].model.name: call.args[0] for call in mock_analyze.call_args_list}
    assert configs["harmonic"].outputs.chain_report_json == "first.json"


def test_sweep_reports_unexpected_errors(tmp_path, monkeypatch):
    write_sweep_configs(tmp_path)
    monkeypatch.chdir(tmp_path)
    worker = MagicMock(side_effect=lambda cfg, debug=False: 0 if cfg.model.name == "harmonic" else 1 // 0)

    with patch("srusk.cli.analyze_config", worker):
        result = runner.invoke(app, ["analyze", "--sweep", "first.toml", "--sweep", "second.json"])

    assert result.exit_code == 1
    assert worker.call_count == 2
    assert "second.json: Error:" in result.stdout
    assert "first.toml: exit 0" in result.stdout
    assert "second.json: exit 1" in result.stdout


@patch("srusk.cli.Integrator.run")
def test_integrate_reports_initial_position_correction(mock_run):
    point = UnifiedPoint(0.0, [1.0], [0.0], [0.0])
    mock_run.return_value = Trajectory("harmonic", [point], np.zeros(1), np.zeros(1), np.zeros(1), "newton",
                                       initial_q_correction=1.5e-3)

    result = runner.invoke(app, ["integrate", "-m", "harmonic", "--sample-count", "4"])

    assert result.exit_code == 0
    assert "Initial projection moved q by 1.500e-03" in result.stdout
