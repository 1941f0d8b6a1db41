from dataclasses import replace

import pytest

from src.core.scenarios import ScenarioManager
from src.core.sweep import RESULT_COLUMNS, default_threads, expand_grid, sweep
from src.utils.file_handling import FileHandler
from src.utils.progress_tracking import BatchProgressTracker


@pytest.fixture(scope="module")
def corollary():
    return ScenarioManager().scenario("disk-corollary").with_overrides({"resolution": "16"})


def test_expand_grid():
    assert expand_grid({}) == []
    rows = expand_grid({"a": ["1", "2"], "b": ["x"]})
    assert rows == [{"a": "1", "b": "x"}, {"a": "2", "b": "x"}]


def test_default_threads(monkeypatch):
    monkeypatch.setenv("QUENCHLAB_THREADS", "3")
    assert default_threads() == 3
    monkeypatch.setenv("QUENCHLAB_THREADS", "lots")
    assert default_threads() >= 1


def test_empty_sweep(corollary):
    table = sweep(corollary)
    assert table.rows == []
    assert table.columns[-len(RESULT_COLUMNS):] == RESULT_COLUMNS


def test_threshold_sweep(corollary, tmp_path):
    scenario = replace(corollary, sweep_grid={"threshold_multiple": ["0.25", "1.2"], "p": ["2", "1"]})
    tracker = BatchProgressTracker("sweep", enabled=False)
    table = sweep(scenario, threads=2, progress=tracker)
    assert tracker.current_batch == 4
    assert [row["row"] for row in table.rows] == [0, 1, 2, 3]

    below, invalid_below, above, invalid_above = table.rows
    assert below["status"] == "ok"
    assert below["run_verdict"] == "completed-horizon"
    assert below["Tbar_upper"] is None

    assert above["status"] == "ok"
    assert above["run_verdict"] == "blowup-detected"
    assert above["sandwich"] == "pass"
    assert above["Psi0"] == pytest.approx(1.2 * above["corollary_threshold"], rel=1e-9)
    assert above["tstar"] < 1.1 * above["Tbar_upper"]

    for row in (invalid_below, invalid_above):
        assert row["status"] == "error"
        assert "p" in row["message"]

    path = table.write_csv(tmp_path / "sweep.csv")
    rows = FileHandler.load_csv(path)
    assert [row["status"] for row in rows] == ["ok", "error", "ok", "error"]
    assert list(rows[0])[:4] == ["row", "name", "threshold_multiple", "p"]


def test_sweep_rows_write_outputs(corollary, tmp_path):
    scenario = replace(corollary, sweep_grid={"threshold_multiple": ["1.5"]})
    table = sweep(scenario, threads=1, output_dir=str(tmp_path))
    name = table.rows[0]["name"]
    assert name == "disk-corollary-000"
    assert (tmp_path / name / "summary.json").exists()
