"""Consistency drifts for forward mortality rates and improvements.

All integrals run on the (s, z) grid of :mod:`fwdmort.surface`:

* ``row``  : int_0^s f(u, s + y - u) du       (fixed terminal age)
* ``diag`` : int_{max(-y,0)}^s f(u, y) du      (fixed current age)
* ``diag(row(f))`` : int_{max(-y,0)}^s int_0^u f(v, u + y - v) dv du

Each is a cumulative trapezoid sum, so one drift surface costs
O(n_s * n_z) per loading.

Two families of loadings exist. :class:`VolatilityModel` is the general
form driven by standard Wiener factors and a compensated Poisson measure
with finitely many marks. :class:`LevyScalarVol` is driven by a scalar
Levy process X with cumulant Psi; it maps to the general form with Wiener
loading sqrt(C) * v and jump loadings xi_i * v. X carries the drift B, so
the general-form drift equals the scalar drift plus B * v.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import GridMismatchError
from .levy import LevyDriverSpec, cumulant_d1, cumulant_d2
from .surface import Surface, diag_cumtrapz, row_cumtrapz

__all__ = [
    "VolatilityModel",
    "LevyScalarVol",
    "drift_mu_general",
    "drift_j_general",
    "drift_mu_levy",
    "drift_j_levy",
    "example_closed_form",
    "consistency_residual",
    "vol_j_to_vol_mu",
    "rate_coefficient",
]

RATE_VOL = "rate_vol"
IMPROVEMENT_VOL = "improvement_vol"
Kind = Literal["rate_vol", "improvement_vol"]


@dataclass(frozen=True, eq=False)
class VolatilityModel:
    """Deterministic loading surfaces, one per Wiener factor and per jump mark.

    For ``kind == "rate_vol"`` the loadings are the rate volatilities
    (sigma^k, delta_i); for ``"improvement_vol"`` they are (b^k, c_i).
    """

    wiener_loadings: tuple[Surface, ...]
    jump_loadings: tuple[Surface, ...]
    kind: Kind = RATE_VOL

    def __post_init__(self):
        object.__setattr__(self, "wiener_loadings", tuple(self.wiener_loadings))
        object.__setattr__(self, "jump_loadings", tuple(self.jump_loadings))
        if self.kind not in (RATE_VOL, IMPROVEMENT_VOL):
            raise ValueError(f"unknown volatility kind {self.kind!r}")
        loadings = self.wiener_loadings + self.jump_loadings
        if not loadings:
            raise ValueError("a volatility model needs at least one loading surface")
        for f in loadings[1:]:
            loadings[0].grid.check_same(f.grid)

    @property
    def grid(self):
        return (self.wiener_loadings + self.jump_loadings)[0].grid

    def check_driver(self, driver: LevyDriverSpec) -> None:
        if len(self.wiener_loadings) != driver.wiener_factors:
            raise GridMismatchError(
                f"{len(self.wiener_loadings)} Wiener loadings for "
                f"{driver.wiener_factors} factors"
            )
        if len(self.jump_loadings) != driver.n_marks:
            raise GridMismatchError(
                f"{len(self.jump_loadings)} jump loadings for {driver.n_marks} marks"
            )

    def wiener_array(self) -> np.ndarray:
        g = self.grid
        if not self.wiener_loadings:
            return np.zeros((0,) + g.shape)
        return np.stack([f.values for f in self.wiener_loadings])

    def jump_array(self) -> np.ndarray:
        g = self.grid
        if not self.jump_loadings:
            return np.zeros((0,) + g.shape)
        return np.stack([f.values for f in self.jump_loadings])

    @classmethod
    def zero(cls, grid, driver: LevyDriverSpec, kind: Kind = RATE_VOL) -> "VolatilityModel":
        z = Surface.constant(grid, 0.0)
        return cls((z,) * driver.wiener_factors, (z,) * driver.n_marks, kind)

    def scaled(self, factor: float) -> "VolatilityModel":
        return VolatilityModel(
            tuple(factor * f for f in self.wiener_loadings),
            tuple(factor * f for f in self.jump_loadings),
            self.kind,
        )


@dataclass(frozen=True, eq=False)
class LevyScalarVol:
    """A single loading surface multiplying dX for a scalar Levy driver X."""

    loading: Surface
    kind: Kind = RATE_VOL

    @property
    def grid(self):
        return self.loading.grid

    def to_general(self, driver: LevyDriverSpec) -> VolatilityModel:
        if driver.wiener_factors < 1 and driver.gaussian_c > 0:
            raise GridMismatchError("scalar driver with C > 0 needs a Wiener factor")
        zero = Surface.constant(self.grid, 0.0)
        wiener = [np.sqrt(driver.gaussian_c) * self.loading]
        wiener += [zero] * (driver.wiener_factors - 1)
        jumps = [float(xi) * self.loading for xi in driver.xi]
        return VolatilityModel(tuple(wiener[: driver.wiener_factors]), tuple(jumps), self.kind)

    def scaled(self, factor: float) -> "LevyScalarVol":
        return LevyScalarVol(factor * self.loading, self.kind)


def _require(vol, kind: str) -> None:
    if vol.kind != kind:
        raise ValueError(f"expected {kind} loadings, got {vol.kind}")


def rate_coefficient(f: Surface) -> Surface:
    """-int_0^s f(u, s + y - u) du: turns an improvement coefficient into
    the matching rate coefficient."""
    return Surface(f.grid, -row_cumtrapz(f.values, f.grid.h))


def vol_j_to_vol_mu(vol_j):
    """Rate volatilities implied by improvement volatilities."""
    _require(vol_j, IMPROVEMENT_VOL)
    if isinstance(vol_j, LevyScalarVol):
        return LevyScalarVol(rate_coefficient(vol_j.loading), RATE_VOL)
    return VolatilityModel(
        tuple(rate_coefficient(f) for f in vol_j.wiener_loadings),
        tuple(rate_coefficient(f) for f in vol_j.jump_loadings),
        RATE_VOL,
    )


def _mu_drift_array(sig: np.ndarray, dlt: np.ndarray, w: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros(sig.shape[1:] if len(sig) else dlt.shape[1:])
    for s_k in sig:
        out += s_k * diag_cumtrapz(s_k, h)
    for w_i, d_i in zip(w, dlt):
        out -= w_i * d_i * np.expm1(-diag_cumtrapz(d_i, h))
    return out


def drift_mu_general(vol: VolatilityModel, driver: LevyDriverSpec) -> Surface:
    """Drift making the forward rates consistent:

    alpha = sum_k sigma^k diag(sigma^k) - sum_i w_i delta_i (exp(-diag(delta_i)) - 1).
    """
    _require(vol, RATE_VOL)
    vol.check_driver(driver)
    g = vol.grid
    return Surface(g, _mu_drift_array(vol.wiener_array(), vol.jump_array(), driver.intensities, g.h))


def _j_drift_array(b: np.ndarray, c: np.ndarray, w: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros(b.shape[1:] if len(b) else c.shape[1:])
    for b_k in b:
        r = row_cumtrapz(b_k, h)
        out -= r * diag_cumtrapz(b_k, h) + b_k * diag_cumtrapz(r, h)
    for w_i, c_i in zip(w, c):
        r = row_cumtrapz(c_i, h)
        e = np.exp(diag_cumtrapz(r, h))
        out -= w_i * (r * diag_cumtrapz(c_i, h) * e + c_i * (e - 1.0))
    return out


def drift_j_general(vol: VolatilityModel, driver: LevyDriverSpec) -> Surface:
    """Drift of the forward improvements that makes the implied rates consistent.

    With R = row(b), the Wiener part is -R diag(b) - b diag(R) per factor;
    each jump mark adds -w (R diag(c) e^{diag(R)} + c (e^{diag(R)} - 1)).
    The exponent enters with a plus sign: since delta = -row(c), this is the
    exp(-diag(delta)) of the rate drift.
    """
    _require(vol, IMPROVEMENT_VOL)
    vol.check_driver(driver)
    g = vol.grid
    return Surface(g, _j_drift_array(vol.wiener_array(), vol.jump_array(), driver.intensities, g.h))


def drift_mu_levy(vol: LevyScalarVol, driver: LevyDriverSpec) -> Surface:
    """alpha = -sigma * Psi'(-diag(sigma))."""
    sig = vol.loading.values
    arg = -diag_cumtrapz(sig, vol.grid.h)
    return Surface(vol.grid, -sig * cumulant_d1(driver, arg))


def drift_j_levy(vol: LevyScalarVol, driver: LevyDriverSpec) -> Surface:
    """a = -row(b) diag(b) Psi''(D) - b Psi'(D) with D = diag(row(b)).

    D is allowed beyond the window on the positive side (Psi exists on the
    whole half-line for finite mark lists).
    """
    h = vol.grid.h
    b = vol.loading.values
    r = row_cumtrapz(b, h)
    d = diag_cumtrapz(r, h)
    out = -r * diag_cumtrapz(b, h) * cumulant_d2(driver, d, allow_positive=True)
    out -= b * cumulant_d1(driver, d, allow_positive=True)
    return Surface(vol.grid, out)


def consistency_residual(alpha: Surface, vol, driver: LevyDriverSpec) -> Surface:
    """alpha minus the consistent drift for ``vol``; zero iff consistent."""
    if isinstance(vol, LevyScalarVol):
        ref = drift_mu_levy(vol, driver)
    else:
        ref = drift_mu_general(vol, driver)
    alpha.grid.check_same(ref.grid)
    return alpha - ref


# -- closed forms of the three Gompertz-Makeham volatility examples ----------

_FIELDS = ("a", "b", "alpha", "sigma")


def example_closed_form(which: int, field: str, s, y, driver: LevyDriverSpec,
                        as_printed: bool = False):
    """Closed-form a, b, alpha, sigma for the example volatilities
    b = 1, b = s + y and b = (s + y)(1 - e^{-s}).

    For the third example the published display swaps the two indicator
    branches of g and writes (1 + s - e^{-s}) where (s - 1 + e^{-s}) is
    the value of int_0^s (1 - e^{-u}) du. The corrected expressions are
    returned unless ``as_printed`` is set.
    """
    if which not in (1, 2, 3) or field not in _FIELDS:
        raise ValueError(f"invalid selector ({which!r}, {field!r})")
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    neg = (y < 0).astype(float)
    pos = 1.0 - neg

    def d1(x):
        return cumulant_d1(driver, x, allow_positive=True)

    def d2(x):
        return cumulant_d2(driver, x, allow_positive=True)

    if which == 1:
        arg = s**2 / 2 - y**2 / 2 * neg
        out = {
            "a": lambda: -s * (s + y * neg) * d2(arg) - d1(arg),
            "b": lambda: np.ones_like(s + y),
            "alpha": lambda: s * d1(arg),
            "sigma": lambda: -s + 0 * y,
        }
    elif which == 2:
        arg = (3 * s**2 * y + 2 * s**3) / 6 - y**3 / 6 * neg
        out = {
            "a": lambda: -s * (s + y) * (s**2 / 2 + s * y + y**2 / 2 * neg) * d2(arg)
            - (s + y) * d1(arg),
            "b": lambda: s + y,
            "alpha": lambda: s * (s + y) * d1(arg),
            "sigma": lambda: -s * (s + y),
        }
    else:
        es = np.exp(-s)
        ey = np.exp(np.minimum(y, 50.0))
        common = s * y + s**2 / 2 + (y + s + 1) * es
        if as_printed:
            g = common - (y + 1) * neg - (2 * ey - y**2) / 2 * pos
            k = 1 + s - es
        else:
            g = common - (y + 1) * pos - (2 * ey - y**2) / 2 * neg
            k = s - 1 + es
        hh = (
            ((3 * s**2 - 6 * s) * y + 2 * s**3 - 3 * s**2) / 6
            - (y + s + 1) * es
            + (y + 1) * pos
            + (6 * ey - y**3 - 3 * y**2) / 6 * neg
        )
        out = {
            "a": lambda: -(s + y) * k * g * d2(hh) - (s + y) * (1 - es) * d1(hh),
            "b": lambda: (s + y) * (1 - es),
            "alpha": lambda: (s + y) * k * d1(hh),
            "sigma": lambda: -(s + y) * (es + s - 1),
        }
    val = out[field]()
    return float(val) if np.ndim(val) == 0 else val


def example_surface(which: int, field: str, grid, driver: LevyDriverSpec,
                    as_printed: bool = False) -> Surface:
    s, y = grid.mesh()
    return Surface(grid, example_closed_form(which, field, s, y, driver, as_printed))


def example_vol(which: int, grid, kind: Kind = IMPROVEMENT_VOL) -> LevyScalarVol:
    """The example loading (b for improvements, sigma for rates)."""
    s, y = grid.mesh()
    if which == 1:
        b = np.ones(grid.shape)
    elif which == 2:
        b = s + y
    elif which == 3:
        b = (s + y) * (1 - np.exp(-s))
    else:
        raise ValueError(f"unknown example {which!r}")
    vol = LevyScalarVol(Surface(grid, b), IMPROVEMENT_VOL)
    if kind == RATE_VOL:
        # closed form of -int_0^s b(u, s + y - u) du
        sig = {1: -s, 2: -s * (s + y), 3: -(s + y) * (np.exp(-s) + s - 1)}[which]
        return LevyScalarVol(Surface(grid, sig), RATE_VOL)
    return vol
