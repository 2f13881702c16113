import json
from pathlib import Path

import numpy as np
import pytest

from fwdmort.config import SCHEMA_VERSION, config_hash, load_config
from fwdmort.drift import IMPROVEMENT_VOL, RATE_VOL
from fwdmort.errors import ConfigError, GridMismatchError
from fwdmort.io import fmt, read_surface, read_table, write_surface, write_table
from fwdmort.surface import Surface, SurfaceGrid

EXAMPLE = Path(__file__).resolve().parents[1] / "configs" / "example61.json"


def test_fmt_twelve_digits():
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(True) == "1" and fmt(np.int64(7)) == "7"


def test_surface_roundtrip(tmp_path, small_grid):
    f = Surface.from_function(small_grid, lambda s, y: np.exp(-s) * (s + y) / 3)
    paths = write_surface(tmp_path / "f.csv", f)
    assert [p.name for p in paths] == ["f.csv", "f.json"]
    assert (tmp_path / "f.csv").read_text().startswith("s\\z,0,0.1,")
    back = read_surface(tmp_path / "f.csv")
    assert back.grid == small_grid
    np.testing.assert_allclose(back.values, f.values, rtol=1e-11)


def test_surface_read_errors(tmp_path, small_grid):
    f = Surface.constant(small_grid, 1.0)
    write_surface(tmp_path / "f.csv", f)
    with pytest.raises(GridMismatchError):
        read_surface(tmp_path / "f.csv", SurfaceGrid.from_extent(0.1, 1.0, 1.0))
    (tmp_path / "f.json").unlink()
    with pytest.raises(ConfigError):
        read_surface(tmp_path / "f.csv")
    (tmp_path / "g.csv").write_text("x,1\n0,1\n")
    with pytest.raises(ConfigError):
        read_surface(tmp_path / "g.csv", small_grid)


def test_table_roundtrip(tmp_path):
    write_table(tmp_path / "t.csv", ["t", "r"], [(0.0, 0.01), (1.0, 0.02)])
    tab = read_table(tmp_path / "t.csv", ["t", "r"])
    np.testing.assert_array_equal(tab["r"], [0.01, 0.02])
    with pytest.raises(ConfigError):
        read_table(tmp_path / "t.csv", ["missing"])


def test_example_config_builds():
    rc = load_config(EXAMPLE)
    cfg = rc.scenario()
    assert cfg.n_paths == 10_000 and cfg.seed == 7
    assert cfg.grid.shape == (26, 151)
    assert len(cfg.observations) == 7
    assert rc.volatility().kind == IMPROVEMENT_VOL
    assert rc.volatility(kind=RATE_VOL).kind == RATE_VOL


def test_overrides_and_hash():
    rc = load_config(EXAMPLE)
    rc2 = rc.with_overrides(seed=3, paths=10)
    assert rc2.scenario().seed == 3 and rc2.scenario().n_paths == 10
    assert rc2.raw["cohort"]["seed"] == 3
    assert rc.hash != rc2.hash
    assert rc.hash == config_hash(json.loads(EXAMPLE.read_text()))


def _write(tmp_path, raw):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(raw))
    return p


@pytest.mark.parametrize("mutate", [
    lambda r: r.pop("grid"),
    lambda r: r.update(schema_version=SCHEMA_VERSION + 1),
    lambda r: r["grid"].update(h=-0.1),
    lambda r: r["grid"].update(s_max=2.55),
    lambda r: r["volatility"].update(constant=1.0),
    lambda r: r["simulation"].update(seed=-1),
    lambda r: r["simulation"].update(dt=0.15),
    lambda r: r.update(extra=1),
    lambda r: r["driver"].update(type="general", gaussian_c=-1.0),
])
def test_invalid_configs(tmp_path, mutate):
    raw = json.loads(EXAMPLE.read_text())
    mutate(raw)
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, raw)).scenario()


def test_malformed_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_csv_inputs(tmp_path, small_grid):
    raw = json.loads(EXAMPLE.read_text())
    raw["grid"] = {"h": 0.1, "s_max": 2.0, "z_max": 4.0}
    write_surface(tmp_path / "vol.csv", Surface.constant(small_grid, 0.5))
    write_surface(tmp_path / "j0.csv", Surface.constant(small_grid, 0.001))
    write_table(tmp_path / "gamma0.csv", ["z", "gamma"], [(z, 0.01) for z in small_grid.z])
    raw["volatility"] = {"csv": "vol.csv", "kind": "improvement_vol"}
    raw["initial"] = {"j0_csv": "j0.csv", "gamma0_csv": "gamma0.csv"}
    raw["simulation"]["observations"] = [[1.0, 0.0]]
    rc = load_config(_write(tmp_path, raw))
    cfg = rc.scenario()
    assert cfg.vol.loading.values[0, 0] == 0.5
    np.testing.assert_allclose(cfg.initial.mu0.values[0], 0.01)


def test_general_driver(tmp_path):
    raw = json.loads(EXAMPLE.read_text())
    raw["driver"] = {"type": "general", "drift_b": 0.0, "gaussian_c": 0.5,
                     "jump_marks": [{"xi": 0.5, "w": 2.0}], "wiener_factors": 1}
    rc = load_config(_write(tmp_path, raw))
    assert rc.driver().gaussian_c == 0.5
