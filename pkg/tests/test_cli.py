import json

import pytest

import src.core.verification as verification
import src.main as main
from src.core.exceptions import EigenSolveError
from src.main import EXIT_NUMERICAL, EXIT_OK, EXIT_SANDWICH, EXIT_VALIDATION, build_parser, cli
from src.utils.file_handling import FileHandler

DECAYING = """
    [scenario]
    name = decaying
    outputs = trajectory-csv, summary-json

    [domain]
    kind = ball
    resolution = 16

    [coefficients]
    k1 = 0
    k2 = 0

    [exponents]
    p = 2
    q = 2

    [initial]
    u0 = bump(amplitude=1)
    v0 = bump(amplitude=1)

    [run]
    horizon = 0.002
"""


@pytest.fixture
def run_cli(tmp_path):
    def invoke(*args):
        return cli(["--quiet", "--log-dir", str(tmp_path / "logs"), *args])
    return invoke


def test_presets(run_cli, capsys):
    assert run_cli("presets") == EXIT_OK
    out = capsys.readouterr().out
    assert "disk-blowup" in out and "square-small-data" in out


def test_eig_reports_bessel_reference(run_cli, capsys):
    assert run_cli("eig", "disk-blowup", "--resolution", "32") == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["phi1_positive"]
    assert result["lambda1"] == pytest.approx(result["bessel_lambda1"], rel=2e-2)


def test_sobolev_with_probes(run_cli, capsys):
    assert run_cli("sobolev", "disk-blowup", "--resolution", "16", "--r", "2,4", "--probes", "10") == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["2"]["method"] == "rayleigh-exact"
    assert result["4"]["envelope_holds"]


def test_sobolev_exponent_outside_range(run_cli, capsys):
    assert run_cli("sobolev", "disk-blowup", "--resolution", "16", "--r", "1.5") == EXIT_VALIDATION
    assert "sobolev-exponent" in capsys.readouterr().err


def test_simulate_writes_outputs(run_cli, write_config, tmp_path, capsys):
    config = write_config(DECAYING)
    assert run_cli("simulate", str(config), "--output", str(tmp_path / "out")) == EXIT_OK
    out = tmp_path / "out" / "decaying"
    summary = FileHandler.load_json(out / "summary.json")
    assert summary["verdicts"]["run"] == "completed-horizon"
    rows = FileHandler.load_csv(out / "trajectory.csv")
    assert float(rows[-1]["t"]) == pytest.approx(0.002)
    assert "decaying" in capsys.readouterr().out


def test_bounds_prints_table_and_json(run_cli, capsys):
    assert run_cli("bounds", "disk-blowup", "--resolution", "16") == EXIT_OK
    out = capsys.readouterr().out
    assert "T0 (upper)" in out
    payload = json.loads(out[out.index("{"):])
    assert payload["bounds"]["T"] < payload["bounds"]["T0"]


def test_validation_error_exit_code(run_cli, write_config, capsys):
    config = write_config(DECAYING.replace("p = 2", "p = 1"))
    assert run_cli("bounds", str(config)) == EXIT_VALIDATION
    assert "[p > 1]" in capsys.readouterr().err


def test_bounds_need_sources(run_cli, write_config):
    assert run_cli("bounds", str(write_config(DECAYING))) == EXIT_VALIDATION


@pytest.mark.parametrize("argv", [[], ["presets", "--bogus"], ["verify"], ["sweep", "x", "--threads", "many"]])
def test_usage_errors(run_cli, argv):
    assert run_cli(*argv) == EXIT_VALIDATION


def test_unknown_config(run_cli):
    assert run_cli("verify", "no-such-preset-or-file") == EXIT_VALIDATION


def test_numerical_error_exit_code(run_cli, monkeypatch):
    def failing(desc):
        raise EigenSolveError("no convergence")
    monkeypatch.setattr(main, "clamped_eigenpair", failing)
    assert run_cli("eig", "disk-blowup", "--resolution", "16") == EXIT_NUMERICAL


def test_verify_passes_and_is_deterministic(run_cli, tmp_path):
    outputs = []
    for attempt in ("a", "b"):
        parent = tmp_path / attempt
        assert run_cli("verify", "disk-blowup", "--resolution", "32", "--output", str(parent)) == EXIT_OK
        outputs.append(parent / "disk-blowup")
    first, second = outputs
    for name in ("trajectory.csv", "summary.json", "functionals.svg"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    summary = FileHandler.load_json(first / "summary.json")
    assert summary["verdicts"]["sandwich"] == "pass"
    assert summary["verdicts"]["run"] == "blowup-detected"


def test_sandwich_failure_exit_code(run_cli, monkeypatch, tmp_path):
    monkeypatch.setattr(verification, "sandwich_verdict", lambda *args: verification.FAIL)
    assert run_cli("verify", "disk-blowup", "--resolution", "16", "--output", str(tmp_path)) == EXIT_SANDWICH


def test_parser_lists_subcommands():
    help_text = build_parser().format_help()
    for command in ("eig", "sobolev", "simulate", "bounds", "verify", "sweep", "presets"):
        assert command in help_text
