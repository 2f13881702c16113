"""Versioned JSON run configuration.

A config is a JSON object with ``schema_version`` 1 and the sections
``grid``, ``driver``, ``volatility``, ``initial`` plus optional
``simulation``, ``cohort``, ``price``, ``drift_table`` and ``validate``.
Relative file paths are resolved against the config file's directory.
See ``configs/example61.json`` for a complete example.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .drift import IMPROVEMENT_VOL, RATE_VOL, LevyScalarVol, example_vol
from .errors import ConfigError, DomainError
from .levy import LevyDriverSpec, jump_diffusion_driver
from .simulate import IMPROVEMENTS, RATES, InitialSurfaces, ScenarioConfig
from .surface import Curve, GompertzParams, Surface, SurfaceGrid, gompertz_makeham_surfaces

__all__ = ["SCHEMA_VERSION", "SCHEMA", "RunConfig", "load_config", "config_hash"]

SCHEMA_VERSION = 1

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "grid", "driver", "volatility", "initial"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "grid": {
            "type": "object",
            "required": ["h", "s_max", "z_max"],
            "properties": {"h": _pos, "s_max": _pos, "z_max": _pos},
            "additionalProperties": False,
        },
        "driver": {
            "type": "object",
            "properties": {
                "type": {"enum": ["jump_diffusion", "general"]},
                "scale": _pos,
                "drift_b": _num,
                "gaussian_c": {"type": "number", "minimum": 0},
                "jump_marks": {
                    "type": "array",
                    "items": {"type": "object", "required": ["xi", "w"],
                              "properties": {"xi": _num, "w": _pos}},
                },
                "wiener_factors": {"type": "integer", "minimum": 0},
                "window": {"type": ["object", "null"]},
            },
            "additionalProperties": False,
        },
        "volatility": {
            "type": "object",
            "properties": {
                "example": {"enum": [1, 2, 3]},
                "constant": _num,
                "csv": {"type": "string"},
                "kind": {"enum": [RATE_VOL, IMPROVEMENT_VOL]},
                "scale": _num,
            },
            "oneOf": [{"required": ["example"]}, {"required": ["constant"]}, {"required": ["csv"]}],
            "additionalProperties": False,
        },
        "initial": {
            "type": "object",
            "properties": {
                "gompertz": {"type": "array", "items": _num, "minItems": 5, "maxItems": 5},
                "mu0_csv": {"type": "string"},
                "j0_csv": {"type": "string"},
                "gamma0_csv": {"type": "string"},
            },
            "oneOf": [
                {"required": ["gompertz"]},
                {"required": ["mu0_csv"]},
                {"required": ["j0_csv", "gamma0_csv"]},
            ],
            "additionalProperties": False,
        },
        "simulation": {
            "type": "object",
            "required": ["dt", "t_end"],
            "properties": {
                "dt": _pos,
                "t_end": _pos,
                "n_paths": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "mode": {"enum": [RATES, IMPROVEMENTS]},
                "drift": {"enum": ["consistent", "zero"]},
                "checkpoint_every": {"type": "integer", "minimum": 1},
                "observations": {"type": "array", "items": _pair},
                "cohorts": {"type": "array", "items": _num},
                "dump_paths": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "cohort": {
            "type": "object",
            "required": ["x", "n"],
            "properties": {
                "x": _num,
                "n": {"type": "integer", "minimum": 1},
                "path": {"type": "integer", "minimum": 0},
                "constant_hazard": {"type": "number", "minimum": 0},
                "t_end": _pos,
                "checkpoints": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
            },
            "additionalProperties": False,
        },
        "price": {
            "type": "object",
            "required": ["instruments"],
            "properties": {
                "curve_csv": {"type": "string"},
                "flat_rate": _num,
                "valuation_times": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "instruments": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["type", "dates", "x"],
                        "properties": {
                            "type": {"enum": ["survivor_bond", "annuity"]},
                            "dates": {"type": "array", "items": {"type": "number", "minimum": 0}},
                            "x": _num,
                            "name": {"type": "string"},
                        },
                        "additionalProperties": False,
                    },
                },
            },
            "additionalProperties": False,
        },
        "drift_table": {
            "type": "object",
            "properties": {"example": {"enum": [1, 2, 3]}, "field": {"enum": ["mu", "j"]}},
            "additionalProperties": False,
        },
        "validate": {
            "type": "object",
            "properties": {
                "martingale_checkpoints": {"type": "array", "items": _num},
                "z_band": _pos,
                "min_pass_fraction": {"type": "number", "minimum": 0, "maximum": 1},
                "control_scale": _pos,
                "control_z": _pos,
                "oracle_h": _pos,
                "oracle_tol": _pos,
                "lln_n": {"type": "integer", "minimum": 2},
                "identity_paths": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


def config_hash(raw: dict) -> str:
    """SHA-256 of the canonical JSON form."""
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class RunConfig:
    """A validated config with helpers that build library objects."""

    raw: dict
    base_dir: Path

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def section(self, name: str) -> dict:
        sec = self.raw.get(name)
        if sec is None:
            raise ConfigError(f"config has no '{name}' section")
        return sec

    def with_overrides(self, seed: int | None = None, paths: int | None = None) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        if seed is not None or paths is not None:
            sim = raw.setdefault("simulation", {})
            if seed is not None:
                sim["seed"] = int(seed)
                if "cohort" in raw:
                    raw["cohort"]["seed"] = int(seed)
            if paths is not None:
                sim["n_paths"] = int(paths)
        return validate_raw(raw, self.base_dir)

    def _path(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    # -- builders -------------------------------------------------------------

    def grid(self) -> SurfaceGrid:
        g = self.raw["grid"]
        return _domain(lambda: SurfaceGrid.from_extent(g["h"], g["s_max"], g["z_max"]))

    def driver(self) -> LevyDriverSpec:
        d = dict(self.raw["driver"])
        kind = d.pop("type", "jump_diffusion")
        if kind == "jump_diffusion":
            extra = set(d) - {"scale", "window"}
            if extra:
                raise ConfigError(f"jump_diffusion driver takes only 'scale'; got {sorted(extra)}")
            window = d.get("window")
            if window is not None:
                window = (float(window["M"]), float(window["eps"]))
            return _domain(lambda: jump_diffusion_driver(d.get("scale", 1.0), window))
        return _domain(lambda: LevyDriverSpec.from_dict(d))

    def volatility(self, grid: SurfaceGrid | None = None, kind: str | None = None):
        from .io import read_surface

        grid = grid or self.grid()
        v = self.raw["volatility"]
        kind = kind or v.get("kind", IMPROVEMENT_VOL)
        scale = float(v.get("scale", 1.0))
        if "example" in v:
            vol = example_vol(v["example"], grid, kind)
        elif "constant" in v:
            vol = LevyScalarVol(Surface.constant(grid, float(v["constant"])), kind)
        else:
            vol = LevyScalarVol(read_surface(self._path(v["csv"]), grid), kind)
        return vol.scaled(scale)

    def initial(self, grid: SurfaceGrid | None = None) -> InitialSurfaces:
        from .io import read_surface, read_table

        grid = grid or self.grid()
        ini = self.raw["initial"]
        if "gompertz" in ini:
            p = _domain(lambda: GompertzParams(*ini["gompertz"]))
            j0, mu0, g0 = gompertz_makeham_surfaces(p, grid)
            return InitialSurfaces(mu0=mu0, j0=j0, gamma0=g0)
        if "mu0_csv" in ini:
            return InitialSurfaces(mu0=read_surface(self._path(ini["mu0_csv"]), grid))
        j0 = read_surface(self._path(ini["j0_csv"]), grid)
        tab = read_table(self._path(ini["gamma0_csv"]), ["z", "gamma"])
        if len(tab["z"]) != grid.n_z or not np.allclose(tab["z"], grid.z):
            raise ConfigError("gamma0 curve must be given on the grid's age nodes")
        return InitialSurfaces(j0=j0, gamma0=Curve(grid.h, tab["gamma"]))

    def scenario(self, **overrides) -> ScenarioConfig:
        sim = dict(self.section("simulation"))
        grid = self.grid()
        mode = sim.get("mode", RATES)
        kind = IMPROVEMENT_VOL if mode == IMPROVEMENTS else None
        vol = self.volatility(grid, kind)
        drv = self.driver()
        cfg = dict(
            grid=grid,
            driver=drv,
            vol=vol,
            initial=self.initial(grid),
            dt=sim["dt"],
            t_end=sim["t_end"],
            n_paths=sim.get("n_paths", 1),
            seed=sim.get("seed", 0),
            mode=mode,
            drift=sim.get("drift", "consistent"),
            checkpoint_every=sim.get("checkpoint_every", 1),
            observations=tuple(tuple(o) for o in sim.get("observations", ())),
            cohorts=tuple(sim.get("cohorts", ())),
            keep_paths=sim.get("dump_paths", 0),
        )
        cfg.update(overrides)
        return _domain(lambda: ScenarioConfig(**cfg))


def _domain(fn):
    """Report invalid values in a config as configuration errors."""
    try:
        return fn()
    except ConfigError:
        raise
    except (DomainError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def validate_raw(raw, base_dir: Path) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from exc
    rc = RunConfig(raw, Path(base_dir))
    rc.grid()
    rc.driver()
    return rc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return validate_raw(raw, path.resolve().parent)
