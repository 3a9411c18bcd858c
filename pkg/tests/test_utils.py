"""
Tests for the utils module.
"""

import json

import numpy as np
import pandas as pd

from srusk.integrator import Trajectory
from srusk.unified import UnifiedPoint
from srusk.utils import export_chain_report, export_trajectory_csv, trajectory_to_csv


def sample_trajectory():
    points = [
        UnifiedPoint(0.0, [1.0, 0.1], [0.0, 0.2], [0.0, 0.2]),
        UnifiedPoint(0.1, [0.995004165278026, 0.12], [-0.0998334166468282, 0.2], [-0.0998334166468282, 0.2]),
    ]
    return Trajectory("sample", points, np.array([0.0, 1e-13]), np.zeros(2), np.array([0.5, 0.5 + 1e-12]))


def test_trajectory_csv_header():
    text = trajectory_to_csv(sample_trajectory())
    header = text.splitlines()[0]

    assert header == "t,q0,q1,v0,v1,p0,p1,constraint_residual,el_residual,energy"
    assert len(text.splitlines()) == 3


def test_export_trajectory_to_file(tmp_path):
    """Values survive the CSV round trip bit for bit."""
    filename = tmp_path / "nested" / "trajectory.csv"
    trajectory = sample_trajectory()

    assert export_trajectory_csv(trajectory, str(filename)) == str(filename)
    df = pd.read_csv(filename, float_precision="round_trip")
    assert df["q0"].tolist() == [1.0, 0.995004165278026]
    assert df["v0"].iloc[1] == -0.0998334166468282
    assert df["energy"].iloc[1] == 0.5 + 1e-12


def test_export_trajectory_to_console(capsys):
    result = export_trajectory_csv(sample_trajectory())

    assert result is None
    assert capsys.readouterr().out.startswith("t,q0,q1")


def test_export_chain_report(tmp_path, capsys):
    report = {"model": "harmonic", "level_sizes": [1], "termination": "AllDetermined"}
    filename = tmp_path / "reports" / "chain.json"

    assert export_chain_report(report, str(filename)) == str(filename)
    assert json.loads(filename.read_text()) == report

    assert export_chain_report(report) is None
    assert json.loads(capsys.readouterr().out) == report
