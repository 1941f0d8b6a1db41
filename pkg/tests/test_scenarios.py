from pathlib import Path

import numpy as np
import pytest

from src.core.bounds import OPTIMIZED, compute_bounds, corollary_threshold
from src.core.evolution import DEFAULT_THRESHOLD
from src.core.exceptions import ConfigError
from src.core.scenarios import (
    OUTPUT_KINDS,
    ScenarioManager,
    initial_profile,
    load_scenario,
)
from src.core.sweep import expand_grid
from src.utils.file_handling import FileHandler

BALL = """
    [scenario]
    name = small-ball

    [domain]
    kind = ball
    dimension = 2
    radius = 1
    resolution = 16

    [exponents]
    p = 3
    q = 2

    [initial]
    u0 = bump(amplitude=2)
    v0 = gaussian(amplitude=1, width=0.3)

    [run]
    horizon = 0.01
"""


def test_minimal_ball_scenario(write_config):
    scenario = load_scenario(write_config(BALL))
    spec = scenario.spec
    assert scenario.name == "small-ball"
    assert scenario.outputs == OUTPUT_KINDS
    assert spec.domain.is_ball and spec.domain.resolution == 16
    assert (spec.p, spec.q, spec.horizon) == (3.0, 2.0, 0.01)
    assert spec.blowup_threshold == DEFAULT_THRESHOLD
    assert spec.u0.max() == pytest.approx(2.0)
    assert spec.u0[-1] == 0.0 and spec.v0[-1] == 0.0
    assert scenario.applies == {"lower_bounds": True, "upper_bounds": True, "corollary": False}
    assert not scenario.horizon_from_lower_bound


def test_rectangle_scenario_flags_upper_bounds(write_config):
    path = write_config("""
        [domain]
        kind = rectangle
        lx = 2
        ly = 1
        resolution = 12

        [coefficients]
        h1 = 0.5

        [exponents]
        p = 2
        q = 2

        [initial]
        u0 = bump(amplitude=1)
        v0 = zero
    """, name="rect.cfg")
    scenario = load_scenario(path)
    assert scenario.name == "rect"
    assert not scenario.applies["upper_bounds"]
    assert scenario.horizon_from_lower_bound


def test_error_names_file_and_line(write_config):
    path = write_config(BALL.replace("resolution = 16", "resolution = 16\n\n    [coefficients]\n    delta1 = -1"))
    with pytest.raises(ConfigError) as info:
        load_scenario(path)
    assert info.value.line == 11
    assert f"{path}:11:" in str(info.value)
    assert info.value.hypothesis == "delta_i > 0"


def test_exponent_hypothesis(write_config):
    with pytest.raises(ConfigError) as info:
        load_scenario(write_config(BALL.replace("p = 3", "p = 1")))
    assert info.value.hypothesis == "p > 1"
    assert info.value.line == 11


def test_p_below_q_is_rejected(write_config):
    with pytest.raises(ConfigError) as info:
        load_scenario(write_config(BALL.replace("q = 2", "q = 4")))
    assert info.value.hypothesis == "p >= q > 1"


@pytest.mark.parametrize("text, fragment", [
    (BALL + "\n    [extras]\n    x = 1\n", "unknown section"),
    (BALL.replace("kind = ball", "kind = ball\n    kind = rectangle"), "duplicate key"),
    (BALL.replace("u0 = bump(amplitude=2)", "u0 = wave()"), "Unknown initial profile"),
    (BALL.replace("horizon = 0.01", "horizon = soon"), "not a number"),
    (BALL.replace("name = small-ball", "name = x\n    outputs = pdf"), "unknown output kind"),
    ("kind = ball\n", "outside of any section"),
])
def test_schema_errors(write_config, text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        load_scenario(write_config(text))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "absent.cfg")


def test_coefficient_tables(write_config):
    path = write_config(BALL.replace("[exponents]", "[coefficients]\n    k1 = 0:1, 1:3\n    h2 = 0:0, 0.5:1\n\n    [exponents]"))
    profile = load_scenario(path).spec.coefficients
    assert profile.kind == "table"
    assert profile.at(0.5).k1 == pytest.approx(2.0)
    assert profile.at(0.25).h2 == pytest.approx(0.5)
    assert profile.at(0.75).h2 == pytest.approx(1.0)


def test_unordered_table_is_rejected(write_config):
    with pytest.raises(ConfigError, match="strictly increasing"):
        load_scenario(write_config(BALL.replace("[exponents]", "[coefficients]\n    k1 = 1:1, 0:3\n\n    [exponents]")))


def test_presets():
    manager = ScenarioManager()
    assert set(manager.get_preset_descriptions()) == {
        "disk-blowup", "disk-small-data", "disk-corollary", "square-small-data"
    }
    assert manager.get_preset("nope") is None
    with pytest.raises(ConfigError):
        manager.scenario("nope")


def test_preset_layering(write_config):
    path = write_config("""
        [scenario]
        preset = disk-blowup
        name = layered

        [domain]
        resolution = 16

        [initial]
        amplitude = 6

        [bounds]
        epsilon_mode = optimized
    """)
    scenario = load_scenario(path)
    assert scenario.name == "layered"
    assert scenario.spec.domain.resolution == 16
    assert scenario.spec.u0.max() == pytest.approx(6.0)
    assert scenario.spec.horizon == 0.05
    assert scenario.epsilon_mode == OPTIMIZED


def test_unknown_preset(write_config):
    with pytest.raises(ConfigError, match="unknown preset"):
        load_scenario(write_config("[scenario]\npreset = moon\n"))


def test_threshold_multiple_scaling():
    scenario = ScenarioManager().scenario("disk-corollary").with_overrides({"resolution": "16"})
    consts = compute_bounds(scenario.spec).constants
    assert consts.Psi0 == pytest.approx(1.2 * corollary_threshold(consts, 2.0), rel=1e-10)


def test_grid_file_profile(tmp_path, disk):
    values = initial_profile("bump(amplitude=3)", disk)
    path = tmp_path / "u0.grid"
    FileHandler.write_grid_file(values, path)
    np.testing.assert_array_equal(initial_profile(f"file:{path}", disk), values)


def test_bad_grid_file(write_config, tmp_path):
    bad = tmp_path / "bad.grid"
    bad.write_bytes(b"NOTAGRID" + bytes(8))
    with pytest.raises(ConfigError, match="not a grid file"):
        load_scenario(write_config(BALL.replace("u0 = bump(amplitude=2)", f"u0 = file:{bad}")))


def test_grid_file_with_wrong_size(write_config, tmp_path):
    wrong = tmp_path / "wrong.grid"
    FileHandler.write_grid_file(np.zeros(5), wrong)
    with pytest.raises(ConfigError) as info:
        load_scenario(write_config(BALL.replace("u0 = bump(amplitude=2)", f"u0 = file:{wrong}")))
    assert info.value.hypothesis == "grid-file"


def test_sweep_section(write_config):
    path = write_config(BALL + "\n    [sweep]\n    amplitude = 1, 2, 3\n    p = 3, 4, 5\n")
    scenario = load_scenario(path)
    assert scenario.sweep_grid == {"amplitude": ["1", "2", "3"], "p": ["3", "4", "5"]}
    rows = expand_grid(scenario.sweep_grid)
    assert len(rows) == 9
    assert rows[0] == {"amplitude": "1", "p": "3"}


def test_unsweepable_key(write_config):
    with pytest.raises(ConfigError, match="cannot be swept"):
        load_scenario(write_config(BALL + "\n    [sweep]\n    radius = 1, 2\n"))


def test_with_overrides_keeps_other_settings(write_config):
    scenario = load_scenario(write_config(BALL))
    changed = scenario.with_overrides({"amplitude": "5", "horizon": "0.02"}, name="changed")
    assert changed.name == "changed"
    assert changed.spec.u0.max() == pytest.approx(5.0)
    assert changed.spec.horizon == 0.02
    assert changed.spec.domain == scenario.spec.domain


def test_shipped_configs():
    configs = sorted(Path(__file__).resolve().parent.parent.joinpath("configs").glob("*.cfg"))
    assert configs
    for path in configs:
        scenario = load_scenario(path)
        assert scenario.name == path.stem
