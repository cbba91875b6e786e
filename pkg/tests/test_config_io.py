import json

import numpy as np
import pytest

from su11readout.config import ExperimentConfig, default_config_text, load_config, parse_config, tomllib
from su11readout.errors import ConfigError, InternalConsistencyError
from su11readout.io import read_shots_csv, table_text, validate_table, write_shots_csv, write_table
from su11readout.readout import ShotSet


def test_default_file_matches_model_defaults():
    data = tomllib.loads(default_config_text())
    assert parse_config(data) == ExperimentConfig()


def test_unknown_key_reports_line(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[run]\nseed = 1\n\n[device]\nkappa_mhz = 9.9\nkapa_mhz = 3\n")
    with pytest.raises(ConfigError) as info:
        load_config(p)
    assert "c.toml:6" in str(info.value)
    assert "kapa_mhz" in str(info.value)


def test_invalid_value_and_syntax(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[device]\neta_lower = 1.5\n")
    with pytest.raises(ConfigError, match="eta_lower"):
        load_config(p)
    p.write_text("[device\n")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_interferometer_from_section():
    dev = load_config().device.interferometer()
    assert dev.entangler_gain_db == 2.0
    assert dev.delta_theta == pytest.approx(np.radians(40))


def test_table_roundtrip(tmp_path):
    p = tmp_path / "t.csv"
    rows = [(0.1, 2, "a"), (float("nan"), -3, "b")]
    write_table(p, ("x", "n", "s"), rows)
    validate_table(p, ("x", "n", "s"), 2)
    assert p.read_text().splitlines()[1] == "0.1,2,a"
    with pytest.raises(InternalConsistencyError):
        validate_table(p, ("x", "n"), 2)
    with pytest.raises(InternalConsistencyError):
        validate_table(p, ("x", "n", "s"), 3)


def test_json_table(tmp_path):
    p = tmp_path / "t.json"
    write_table(p, ("x", "y"), [(1.0, float("nan"))], "json")
    assert json.loads(p.read_text()) == [{"x": 1.0, "y": None}]
    validate_table(p, ("x", "y"), 1, "json")


def test_table_row_width_checked():
    with pytest.raises(InternalConsistencyError):
        table_text(("a", "b"), [(1,)])


def test_shot_csv_roundtrip(tmp_path):
    rec = np.array([[0.1, -0.2], [1e-17, 3.0]])
    s = ShotSet(rec, 1, "x", np.array(["x", "z"]), np.array([1, -1], dtype=np.int8))
    p = tmp_path / "s.csv"
    write_shots_csv(p, s)
    back = read_shots_csv(p)
    np.testing.assert_array_equal(back.records, rec)
    np.testing.assert_array_equal(back.outcome, s.outcome)
    assert list(back.axis) == ["x", "z"]
