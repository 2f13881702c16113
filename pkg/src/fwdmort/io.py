"""CSV/JSON import and export for surfaces and tables.

Numbers are written with 12 significant digits so that identical runs
produce byte-identical files.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, GridMismatchError
from .surface import Surface, SurfaceGrid

__all__ = ["fmt", "write_surface", "read_surface", "write_table", "read_table", "write_json"]

FLOAT_FORMAT = "%.12g"


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FORMAT % float(v)


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def write_surface(path, surface: Surface) -> list[Path]:
    """Write ``path`` (CSV) and its grid sidecar; return both paths."""
    path = Path(path)
    g = surface.grid
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s\\z"] + [fmt(z) for z in g.z])
        for s, row in zip(g.s, surface.values):
            w.writerow([fmt(s)] + [fmt(v) for v in row])
    side = _sidecar(path)
    write_json(side, g.to_dict())
    return [path, side]


def read_surface(path, grid: SurfaceGrid | None = None) -> Surface:
    """Read a surface CSV; the grid comes from the sidecar unless given."""
    path = Path(path)
    side = _sidecar(path)
    if grid is None:
        if not side.exists():
            raise ConfigError(f"missing grid sidecar {side}")
        meta = json.loads(side.read_text())
        try:
            grid = SurfaceGrid(float(meta["h"]), int(meta["n_s"]), int(meta["n_z"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad grid sidecar {side}: {exc}") from exc
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0] != "s\\z":
            raise ConfigError(f"{path}: first header cell must be 's\\z'")
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read surface {path}: {exc}") from exc
    if values.shape != grid.shape:
        raise GridMismatchError(f"{path}: shape {values.shape} does not match grid {grid.shape}")
    return Surface(grid, values)


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_table(path, columns: Sequence[str]) -> dict[str, np.ndarray]:
    """Read named float columns from a headed CSV."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            data = {c: [] for c in columns}
            for row in reader:
                for c in columns:
                    data[c].append(float(row[c]))
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot read table {path}: {exc}") from exc
    return {c: np.asarray(v) for c, v in data.items()}


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default, allow_nan=True) + "\n")
    return path
