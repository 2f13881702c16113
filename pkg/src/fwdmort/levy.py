"""Driving noise: finitely many Wiener factors plus a finite-activity
compound Poisson part, and the cumulant of the associated scalar Levy
process.

The scalar process is taken in the form

    X_t = B t + sqrt(C) W_t + sum_i xi_i (N_i(t) - w_i t),

so that ``log E exp(z X_1) = B z + C z^2 / 2 + sum_i w_i (exp(z xi_i) - 1 - z xi_i)``.

The jump diffusion ``X = W + N`` (standard Wiener plus unit-rate Poisson,
uncompensated) has cumulant ``z^2/2 + exp(z) - 1``.  Writing it in the form
above needs C = 1, one mark xi = 1 with w = 1, and B = 1, because the
compensator of N contributes ``w * xi = 1`` to the drift:
``z + z^2/2 + (e^z - 1 - z) = z^2/2 + e^z - 1``.  See
:func:`jump_diffusion_driver`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "JumpMark",
    "LevyDriverSpec",
    "jump_diffusion_driver",
    "cumulant",
    "cumulant_d1",
    "cumulant_d2",
    "sample_increment",
    "levy_increment",
]


@dataclass(frozen=True)
class JumpMark:
    xi: float
    w: float


@dataclass(frozen=True)
class LevyDriverSpec:
    """Immutable description of the driving noise.

    Attributes:
        drift_b: Drift B of the scalar Levy process (per unit time).
        gaussian_c: Gaussian variance C per unit time.
        jump_marks: Finite Levy measure, one (xi, w) atom per mark.
        wiener_factors: Number of independent standard Wiener factors.
            Eigenvalue weights are folded into the volatility loadings.
        window: Optional (M, eps). Cumulants are only evaluated on
            [-(1+eps)M, (1+eps)M]. ``None`` means the whole real line,
            which is legitimate for finite mark lists.
    """

    drift_b: float = 0.0
    gaussian_c: float = 0.0
    jump_marks: tuple[JumpMark, ...] = ()
    wiener_factors: int = 1
    window: tuple[float, float] | None = None
    _xi: np.ndarray = field(init=False, repr=False, compare=False)
    _w: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        marks = tuple(
            m if isinstance(m, JumpMark) else JumpMark(float(m[0]), float(m[1]))
            for m in self.jump_marks
        )
        object.__setattr__(self, "jump_marks", marks)
        if not np.isfinite(self.drift_b):
            raise ConfigError("drift_b must be finite")
        if not (self.gaussian_c >= 0 and np.isfinite(self.gaussian_c)):
            raise ConfigError("gaussian_c must be a finite nonnegative number")
        if int(self.wiener_factors) != self.wiener_factors or self.wiener_factors < 0:
            raise ConfigError("wiener_factors must be a nonnegative integer")
        for m in marks:
            if not (np.isfinite(m.xi) and np.isfinite(m.w) and m.w >= 0):
                raise ConfigError(f"invalid jump mark {m}")
        if self.window is not None:
            M, eps = self.window
            if not (M > 0 and eps > 0):
                raise ConfigError("window requires M > 0 and eps > 0")
            object.__setattr__(self, "window", (float(M), float(eps)))
        object.__setattr__(self, "_xi", np.array([m.xi for m in marks], dtype=float))
        object.__setattr__(self, "_w", np.array([m.w for m in marks], dtype=float))

    @property
    def n_marks(self) -> int:
        return len(self.jump_marks)

    @property
    def xi(self) -> np.ndarray:
        return self._xi

    @property
    def intensities(self) -> np.ndarray:
        return self._w

    @property
    def window_bounds(self) -> tuple[float, float]:
        if self.window is None:
            return (-np.inf, np.inf)
        M, eps = self.window
        return (-(1 + eps) * M, (1 + eps) * M)

    def exponential_moment(self) -> float:
        """sum_i w_i exp((1+eps) M |xi_i|); finite for any finite mark list."""
        if self.window is None:
            return float("inf") if self.n_marks else 0.0
        M, eps = self.window
        return float(np.sum(self._w * np.exp((1 + eps) * M * np.abs(self._xi))))

    def compensator_drift(self) -> float:
        """sum_i w_i xi_i, the mean rate of the raw jump part."""
        return float(np.dot(self._w, self._xi))

    def check_window(self, z, allow_positive: bool = False) -> None:
        lo, hi = self.window_bounds
        z = np.asarray(z, dtype=float)
        bad = (z < lo) | (z > hi)
        if allow_positive:
            bad &= z < 0
        if np.any(bad) or not np.all(np.isfinite(z)):
            raise DomainError(
                f"cumulant argument outside window [{lo}, {hi}]: "
                f"range [{np.nanmin(z)}, {np.nanmax(z)}]"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "LevyDriverSpec":
        try:
            marks = tuple(JumpMark(float(m["xi"]), float(m["w"])) for m in d.get("jump_marks", []))
            window = d.get("window")
            if window is not None:
                window = (float(window["M"]), float(window["eps"]))
            return cls(
                drift_b=float(d.get("drift_b", 0.0)),
                gaussian_c=float(d.get("gaussian_c", 0.0)),
                jump_marks=marks,
                wiener_factors=int(d.get("wiener_factors", 1)),
                window=window,
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad driver block: {exc}") from exc

    def to_dict(self) -> dict:
        out = {
            "drift_b": self.drift_b,
            "gaussian_c": self.gaussian_c,
            "jump_marks": [{"xi": m.xi, "w": m.w} for m in self.jump_marks],
            "wiener_factors": self.wiener_factors,
        }
        if self.window is not None:
            out["window"] = {"M": self.window[0], "eps": self.window[1]}
        return out


def jump_diffusion_driver(scale: float = 1.0, window=None) -> LevyDriverSpec:
    """X = W + N with cumulant z^2/2 + e^z - 1 (``scale`` multiplies X)."""
    return LevyDriverSpec(
        drift_b=scale,
        gaussian_c=scale**2,
        jump_marks=(JumpMark(scale, 1.0),),
        wiener_factors=1,
        window=window,
    )


def _z_xi(spec: LevyDriverSpec, z):
    z = np.asarray(z, dtype=float)
    return z, np.multiply.outer(z, spec.xi)


def cumulant(spec: LevyDriverSpec, z, *, allow_positive: bool = False):
    """Psi(z) = Bz + Cz^2/2 + sum_i w_i (e^{z xi_i} - 1 - z xi_i)."""
    spec.check_window(z, allow_positive)
    z, zx = _z_xi(spec, z)
    jumps = np.sum(spec.intensities * np.expm1(zx) - spec.intensities * zx, axis=-1)
    out = spec.drift_b * z + 0.5 * spec.gaussian_c * z**2 + jumps
    return out if out.ndim else float(out)


def cumulant_d1(spec: LevyDriverSpec, z, *, allow_positive: bool = False):
    """Psi'(z) = B + Cz + sum_i w_i xi_i (e^{z xi_i} - 1)."""
    spec.check_window(z, allow_positive)
    z, zx = _z_xi(spec, z)
    jumps = np.sum(spec.intensities * spec.xi * np.expm1(zx), axis=-1)
    out = spec.drift_b + spec.gaussian_c * z + jumps
    return out if out.ndim else float(out)


def cumulant_d2(spec: LevyDriverSpec, z, *, allow_positive: bool = False):
    """Psi''(z) = C + sum_i w_i xi_i^2 e^{z xi_i}."""
    spec.check_window(z, allow_positive)
    z, zx = _z_xi(spec, z)
    jumps = np.sum(spec.intensities * spec.xi**2 * np.exp(zx), axis=-1)
    out = spec.gaussian_c + jumps
    return out if out.ndim else float(out)


def sample_increment(spec: LevyDriverSpec, dt: float, rng: np.random.Generator,
                     size: int | None = None):
    """Draw the noise over one step of length ``dt``.

    Returns ``(wiener, counts)``: ``wiener`` holds d independent N(0, dt)
    draws and ``counts[i]`` the raw number of jumps of mark i, each
    Poisson(w_i dt). Compensation is left to the caller. With ``size``
    a leading sample axis is added.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    shape = () if size is None else (size,)
    wiener = rng.standard_normal(shape + (spec.wiener_factors,)) * np.sqrt(dt)
    counts = rng.poisson(spec.intensities * dt, size=shape + (spec.n_marks,))
    return wiener, counts


def jump_list(spec: LevyDriverSpec, counts: Sequence[int]) -> list[float]:
    """Expand per-mark jump counts into the list of jump sizes."""
    return [float(x) for x, n in zip(spec.xi, counts) for _ in range(int(n))]


def levy_increment(spec: LevyDriverSpec, dt: float, rng: np.random.Generator,
                   size: int | None = None, compensated: bool = True):
    """Increment of the scalar process X over ``dt``.

    Uses Wiener factor 0 for the Gaussian part. In compensated mode the
    jump part is ``sum_i xi_i (N_i - w_i dt)``, matching :func:`cumulant`;
    otherwise the raw jumps are added.
    """
    if spec.gaussian_c > 0 and spec.wiener_factors == 0:
        raise ConfigError("a Gaussian part needs at least one Wiener factor")
    wiener, counts = sample_increment(spec, dt, rng, size)
    gauss = wiener[..., 0] if spec.wiener_factors else 0.0
    jumps = counts @ spec.xi if spec.n_marks else 0.0
    x = spec.drift_b * dt + np.sqrt(spec.gaussian_c) * gauss + jumps
    if compensated:
        x = x - dt * spec.compensator_drift()
    return x
