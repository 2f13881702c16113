"""Surfaces on the domain {(s, y): s >= 0, s + y >= 0}.

Storage uses the chart (s, z) with z = s + y the terminal age, on a square
grid s_i = i h, z_j = j h. In this chart

* the shift semigroup S_t h(s, y) = h(s + t, y - t) keeps z fixed and moves
  along the s axis, so shifts by multiples of h are exact;
* integrals over u -> f(u, s + y - u) run along a z row;
* integrals at fixed current age y run along the grid diagonals z - s = y,
  starting at s = 0 (y >= 0) or at the birth node z = 0 (y < 0).

Array helpers in this module accept leading batch axes; the last two axes
are always (s, z).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import DomainError, GridMismatchError

__all__ = [
    "SurfaceGrid",
    "Surface",
    "Curve",
    "GompertzParams",
    "shift",
    "evaluate",
    "improvements_to_rates",
    "rates_to_improvements",
    "line_integral_const_age",
    "h_norm",
    "gompertz_makeham_surfaces",
    "row_cumtrapz",
    "diag_cumtrapz",
]

_ALIGN_TOL = 1e-9


def _as_steps(value: float, h: float, what: str) -> int:
    m = round(value / h)
    if abs(value - m * h) > _ALIGN_TOL * max(1.0, abs(value)):
        raise DomainError(f"{what}={value} is not a multiple of h={h}")
    return int(m)


@dataclass(frozen=True)
class SurfaceGrid:
    """Square grid in the (s, z) chart with n_s horizon and n_z age nodes."""

    h: float
    n_s: int
    n_z: int

    def __post_init__(self):
        if not self.h > 0:
            raise DomainError("grid step h must be positive")
        if self.n_s < 1 or self.n_z < 1:
            raise DomainError("grid needs at least one node per axis")
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "n_s", int(self.n_s))
        object.__setattr__(self, "n_z", int(self.n_z))

    @classmethod
    def from_extent(cls, h: float, s_max: float, z_max: float) -> "SurfaceGrid":
        return cls(h, _as_steps(s_max, h, "s_max") + 1, _as_steps(z_max, h, "z_max") + 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_s, self.n_z)

    @property
    def s(self) -> np.ndarray:
        return self.h * np.arange(self.n_s)

    @property
    def z(self) -> np.ndarray:
        return self.h * np.arange(self.n_z)

    @property
    def s_max(self) -> float:
        return self.h * (self.n_s - 1)

    @property
    def z_max(self) -> float:
        return self.h * (self.n_z - 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """(s, y) coordinates of every node, each of shape (n_s, n_z)."""
        s, z = np.meshgrid(self.s, self.z, indexing="ij")
        return s, z - s

    def steps(self, value: float, what: str = "value") -> int:
        return _as_steps(value, self.h, what)

    def check_same(self, other: "SurfaceGrid") -> None:
        if self != other:
            raise GridMismatchError(f"grid mismatch: {self} vs {other}")

    def to_dict(self) -> dict:
        return {"h": self.h, "n_s": self.n_s, "n_z": self.n_z}


@dataclass(frozen=True, eq=False)
class Surface:
    """Real values on a :class:`SurfaceGrid`, indexed (horizon i, terminal age j)."""

    grid: SurfaceGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise GridMismatchError(f"values of shape {v.shape} on grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("surface values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: SurfaceGrid, f: Callable) -> "Surface":
        """Sample ``f(s, y)`` (vectorised) at every node."""
        s, y = grid.mesh()
        return cls(grid, np.broadcast_to(f(s, y), grid.shape))

    @classmethod
    def constant(cls, grid: SurfaceGrid, c: float) -> "Surface":
        return cls(grid, np.full(grid.shape, float(c)))

    def _other(self, other):
        if isinstance(other, Surface):
            self.grid.check_same(other.grid)
            return other.values
        return other

    def __add__(self, other):
        return Surface(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Surface(self.grid, self.values - self._other(other))

    def __mul__(self, other):
        return Surface(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return Surface(self.grid, -self.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True, eq=False)
class Curve:
    """A function of age stored on the z nodes, linearly interpolated."""

    h: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise DomainError("curve values must be a finite 1-d array")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: SurfaceGrid, f: Callable) -> "Curve":
        return cls(grid.h, np.broadcast_to(f(grid.z), (grid.n_z,)))

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        zmax = self.h * (len(self.values) - 1)
        if np.any(z < -_ALIGN_TOL) or np.any(z > zmax + _ALIGN_TOL):
            raise DomainError(f"age outside [0, {zmax}]")
        nodes = self.h * np.arange(len(self.values))
        return np.interp(z, nodes, self.values)


@dataclass(frozen=True)
class GompertzParams:
    theta1: float
    theta2: float
    theta3: float
    theta4: float
    theta5: float

    def __post_init__(self):
        if not self.theta1 > 1:
            raise DomainError("theta1 must exceed 1")
        if not all(t > 0 for t in (self.theta2, self.theta3, self.theta4, self.theta5)):
            raise DomainError("theta2..theta5 must be positive")

    def makeham(self, z):
        """theta3 exp(theta4 z) + theta5."""
        return self.theta3 * np.exp(self.theta4 * np.asarray(z)) + self.theta5

    def j0(self, s, y):
        return self.theta2 * np.exp(-self.theta2 * s) * self.makeham(s + y)

    def mu0(self, s, y):
        return (self.theta1 + np.exp(-self.theta2 * s)) * self.makeham(s + y)

    def gamma0(self, z):
        return (self.theta1 + 1) * self.makeham(z)


# -- array kernels -----------------------------------------------------------


def _cumtrapz(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    a = np.moveaxis(a, axis, -1)
    out = np.zeros_like(a, dtype=float)
    if a.shape[-1] > 1:
        out[..., 1:] = np.cumsum(0.5 * h * (a[..., 1:] + a[..., :-1]), axis=-1)
    return np.moveaxis(out, -1, axis)


def row_cumtrapz(a: np.ndarray, h: float) -> np.ndarray:
    """C[i, j] = int_0^{s_i} f(u, z_j) du, i.e. int_0^s f(u, s + y - u) du."""
    return _cumtrapz(np.asarray(a, dtype=float), h, axis=-2)


@lru_cache(maxsize=32)
def _diag_index(n_s: int, n_z: int):
    i, j = np.meshgrid(np.arange(n_s), np.arange(n_z), indexing="ij")
    return j - i + n_s - 1, np.minimum(i, j)


def diag_cumtrapz(a: np.ndarray, h: float) -> np.ndarray:
    """C[i, j] = int_{max(-y, 0)}^{s_i} f(u, y) du with y = z_j - s_i.

    Every diagonal of constant y starts on the grid boundary (s = 0 or
    z = 0), so a skewed copy with one diagonal per row turns the problem
    into a cumulative sum along rows.
    """
    a = np.asarray(a, dtype=float)
    n_s, n_z = a.shape[-2:]
    d_idx, p_idx = _diag_index(n_s, n_z)
    skew = np.zeros(a.shape[:-2] + (n_s + n_z - 1, min(n_s, n_z)))
    skew[..., d_idx, p_idx] = a
    return _cumtrapz(skew, h, axis=-1)[..., d_idx, p_idx]


def shift_array(a: np.ndarray, m: int) -> np.ndarray:
    """Shift by m rows along s; vacated rows repeat the last row."""
    if m == 0:
        return np.array(a, copy=True)
    n_s = a.shape[-2]
    out = np.empty_like(a)
    keep = max(n_s - m, 0)
    out[..., :keep, :] = a[..., m:, :]
    out[..., keep:, :] = a[..., -1:, :]
    return out


def shift_mask(stale: np.ndarray, m: int) -> np.ndarray:
    """Propagate a per-row staleness mask through a shift by m rows."""
    n_s = stale.shape[-1]
    out = np.ones_like(stale, dtype=bool)
    keep = max(n_s - m, 0)
    out[:keep] = stale[m:]
    return out


# -- operations --------------------------------------------------------------


def shift(f: Surface, t: float) -> Surface:
    """S_t f. Rows pushed past s_max take the last row's values; use
    :func:`shift_mask` to track them."""
    if t < 0:
        raise DomainError("shift requires t >= 0")
    m = f.grid.steps(t, "shift t")
    return Surface(f.grid, shift_array(f.values, m))


def evaluate(f: Surface, s: float, y: float) -> float:
    """Bilinear interpolation of f at (s, y) in the (s, z) chart."""
    g = f.grid
    z = s + y
    tol = _ALIGN_TOL
    if s < -tol or z < -tol or s > g.s_max + tol or z > g.z_max + tol:
        raise DomainError(f"({s}, {y}) outside the grid")
    fs = min(max(s / g.h, 0.0), g.n_s - 1)
    fz = min(max(z / g.h, 0.0), g.n_z - 1)
    i0, j0 = min(int(np.floor(fs)), max(g.n_s - 2, 0)), min(int(np.floor(fz)), max(g.n_z - 2, 0))
    ws, wz = fs - i0, fz - j0
    v = f.values
    i1, j1 = min(i0 + 1, g.n_s - 1), min(j0 + 1, g.n_z - 1)
    return float(
        (1 - ws) * (1 - wz) * v[i0, j0]
        + ws * (1 - wz) * v[i1, j0]
        + (1 - ws) * wz * v[i0, j1]
        + ws * wz * v[i1, j1]
    )


def improvements_to_rates(j0: Surface, gamma0: Curve) -> Surface:
    """mu0(s, y) = gamma0(s + y) - int_0^s j0(u, s + y - u) du."""
    g = j0.grid
    if len(gamma0.values) != g.n_z or abs(gamma0.h - g.h) > _ALIGN_TOL:
        raise GridMismatchError("gamma0 must live on the grid's z nodes")
    return Surface(g, gamma0.values[None, :] - row_cumtrapz(j0.values, g.h))


def rates_to_improvements(mu0: Surface) -> Surface:
    """j0 = -(d/ds - d/dy) mu0, forward difference along z rows."""
    g = mu0.grid
    if g.n_s < 2:
        raise DomainError("need at least two horizon nodes")
    d = np.diff(mu0.values, axis=0) / g.h
    return Surface(g, -np.concatenate([d, d[-1:]], axis=0))


def line_integral_const_age(f: Surface, y: float, s_lo: float, s_hi: float) -> float:
    """Trapezoid rule for int_{s_lo}^{s_hi} f(u, y) du along z = u + y."""
    g = f.grid
    if s_lo > s_hi:
        raise DomainError("s_lo must not exceed s_hi")
    k_lo, k_hi = g.steps(s_lo, "s_lo"), g.steps(s_hi, "s_hi")
    dy = g.steps(y, "y")
    k = np.arange(k_lo, k_hi + 1)
    zj = k + dy
    if k_lo < 0 or k_hi >= g.n_s or zj.min() < 0 or zj.max() >= g.n_z:
        raise DomainError("integration segment leaves the grid")
    vals = f.values[k, zj]
    if len(vals) < 2:
        return 0.0
    return float(g.h * (vals.sum() - 0.5 * (vals[0] + vals[-1])))


def _trap_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def h_norm(f: Surface, beta: float) -> float:
    """Discrete forward-mortality-space norm with exponential weights.

    |h(0,0)|^2 + int |d_s h|^2 e^{-beta s} along z = 0
               + int |d_z h|^2 e^{-beta z} along s = 0
               + double int |d_sz h|^2 e^{-beta (s + z)},
    with second-order differences in the (s, z) chart, truncated to the grid.
    """
    if not beta > 0:
        raise DomainError("beta must be positive")
    g = f.grid
    if g.n_s < 3 or g.n_z < 3:
        raise DomainError("h_norm needs at least 3 nodes per axis")
    v = f.values
    ds = np.gradient(v, g.h, axis=0)
    dz = np.gradient(v, g.h, axis=1)
    dsz = np.gradient(ds, g.h, axis=1)
    ws, wz = _trap_weights(g.n_s, g.h), _trap_weights(g.n_z, g.h)
    es, ez = np.exp(-beta * g.s), np.exp(-beta * g.z)
    total = (
        v[0, 0] ** 2
        + np.sum(ws * es * ds[:, 0] ** 2)
        + np.sum(wz * ez * dz[0, :] ** 2)
        + np.sum(np.outer(ws * es, wz * ez) * dsz**2)
    )
    return float(np.sqrt(total))


def gompertz_makeham_surfaces(p: GompertzParams, grid: SurfaceGrid):
    """Closed-form (j0, mu0, gamma0) of the Gompertz-Makeham family."""
    return (
        Surface.from_function(grid, p.j0),
        Surface.from_function(grid, p.mu0),
        Curve.from_function(grid, p.gamma0),
    )
