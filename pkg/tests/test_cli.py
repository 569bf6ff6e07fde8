"""Tests for the command line entry point."""

import json

import pandas as pd

from app.cli import build_parser, main, resolve_spec
from app.models.schemas import RESULT_COLUMNS, Method


def test_profile_defaults_with_overrides():
    spec = resolve_spec(build_parser().parse_args(["--profile", "paper", "--k", "500", "--methods", "CP,HR"]))
    assert (spec.k, spec.m, spec.epsilon) == (500, 500, 0.5)
    assert spec.methods == [Method.CP, Method.HR]
    assert len(spec.n_grid) == 20


def test_grid_accepts_scientific_notation():
    spec = resolve_spec(build_parser().parse_args(["--n-grid", "1e3,2_000,5e3", "--sparsity", "auto"]))
    assert spec.n_grid == [1000, 2000, 5000]
    assert spec.sparsity == "auto"


def test_run_writes_csv_and_sidecar(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code = main([
        "--k", "120", "--m", "40", "--epsilon", "0.5", "--dist", "geo:0.6",
        "--methods", "CP,RR", "--decoders", "project,normalize",
        "--n-grid", "1000,3000", "--trials", "2", "--seed", "7", "--out", str(out),
    ])
    assert code == 0
    frame = pd.read_csv(out)
    assert list(frame.columns) == RESULT_COLUMNS
    assert len(frame) == 2 * 2 * 2 * 2
    sidecar = json.loads(out.with_suffix(".json").read_text())
    assert sidecar["spec"]["seed"] == 7
    assert "l1_mean" in capsys.readouterr().out


def test_invalid_configuration_exits_with_usage_code(tmp_path, capsys):
    code = main(["--n-grid", "5000,3000", "--out", str(tmp_path / "x.csv")])
    assert code == 2
    assert "Invalid configuration" in capsys.readouterr().err
    assert not (tmp_path / "x.csv").exists()


def test_runtime_failure_exits_nonzero(tmp_path):
    code = main(["--k", "100", "--m", "5", "--sparsity", "10", "--n-grid", "1000",
                 "--trials", "1", "--out", str(tmp_path / "y.csv")])
    assert code == 1
