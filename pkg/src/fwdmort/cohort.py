"""Death times of a cohort from a simulated hazard path.

Individuals die at tau = inf{t : Gamma(t) > eps} with eps ~ Exp(1) drawn
independently, given the hazard path (the canonical construction). All
individuals of a sample share one hazard path, so they are conditionally
independent and doubly stochastic by construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "CumulativeHazard",
    "CohortSample",
    "accumulate_hazard",
    "hazard_from_spot",
    "sample_death_times",
    "lln_diagnostic",
    "compensator_residual",
]

_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CumulativeHazard:
    """Piecewise-linear t -> Gamma_t(t, x) through the knots ``(times, values)``.

    ``floored`` counts knots whose spot rate was negative and was replaced
    by zero while accumulating.
    """

    times: np.ndarray
    values: np.ndarray
    x: float = 0.0
    floored: int = 0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or len(t) < 1:
            raise DomainError("hazard knots must be two equal-length 1-d arrays")
        if np.any(np.diff(t) <= 0):
            raise DomainError("hazard knot times must increase")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, m: float, t_end: float, n: int = 2, x: float = 0.0) -> "CumulativeHazard":
        """Gamma(t) = m (t - max(-x, 0))_+ on [0, t_end]."""
        t = np.linspace(0.0, t_end, n)
        birth = max(-x, 0.0)
        if 0 < birth < t_end:
            t = np.union1d(t, [birth])
        return cls(t, m * np.clip(t - birth, 0.0, None), x)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times[0] - _TOL) or np.any(t > self.t_end + _TOL):
            raise DomainError("time outside the hazard path")
        return np.interp(t, self.times, self.values)

    def scaled(self, factor: float) -> "CumulativeHazard":
        return CumulativeHazard(self.times, factor * self.values, self.x, self.floored)


@dataclass(frozen=True, eq=False)
class CohortSample:
    x: float
    death_times: np.ndarray
    censored: np.ndarray
    hazard: CumulativeHazard

    @property
    def n(self) -> int:
        return len(self.death_times)


def hazard_from_spot(times: Sequence[float], spot: Sequence[float], x: float) -> CumulativeHazard:
    """Trapezoid accumulation of spot rates recorded at checkpoint ``times``.

    ``spot[k]`` is gamma_{t_k}(x) (ignored before birth at -x). Negative
    values are floored at zero so the result is nondecreasing.
    """
    t = np.asarray(times, dtype=float)
    g = np.asarray(spot, dtype=float)
    birth = max(-x, 0.0)
    alive = t >= birth - _TOL
    if birth > 0 and birth <= t[-1] + _TOL:
        if not np.any(np.abs(t - birth) <= _TOL):
            raise DomainError(f"birth time {birth} is not a checkpoint")
    g = np.where(alive, g, 0.0)
    if np.any(np.isnan(g)):
        raise DomainError("missing spot rates along the cohort")
    floored = int(np.count_nonzero(g < 0))
    g = np.maximum(g, 0.0)
    inc = np.where(alive[1:] & alive[:-1], 0.5 * np.diff(t) * (g[1:] + g[:-1]), 0.0)
    return CumulativeHazard(t, np.concatenate([[0.0], np.cumsum(inc)]), x, floored)


def accumulate_hazard(path, x: float) -> CumulativeHazard:
    """Cumulative hazard of cohort ``x`` along a sequence of path states."""
    from .simulate import spot_rate

    times, spot = [], []
    for st in path:
        times.append(st.t)
        y = x + st.t
        if y < -_TOL:
            spot.append(0.0)
            continue
        try:
            spot.append(spot_rate(st, y))
        except DomainError as exc:
            raise DomainError(f"cohort x={x} leaves the grid at t={st.t}") from exc
    return hazard_from_spot(times, spot, x)


def sample_death_times(hazard: CumulativeHazard, n: int, rng: np.random.Generator) -> CohortSample:
    """Invert the hazard at n unit-exponential thresholds; censor at t_end."""
    if n < 1:
        raise DomainError("need at least one individual")
    if np.any(np.diff(hazard.values) < 0):
        raise DomainError("hazard path must be nondecreasing")
    eps = rng.standard_exponential(n)
    return invert_hazard(hazard, eps)


def invert_hazard(hazard: CumulativeHazard, eps: np.ndarray) -> CohortSample:
    """tau = inf{t : Gamma(t) > eps} for given thresholds."""
    t, v = hazard.times, hazard.values
    eps = np.asarray(eps, dtype=float)
    k = np.searchsorted(v, eps, side="right")
    censored = k >= len(v)
    kk = np.clip(k, 1, len(v) - 1)
    lo_t, lo_v, hi_v = t[kk - 1], v[kk - 1], v[kk]
    span = hi_v - lo_v
    frac = np.divide(eps - lo_v, span, out=np.zeros_like(eps), where=span > 0)
    tau = lo_t + frac * (t[kk] - lo_t)
    tau = np.where(k == 0, t[0], tau)
    tau = np.where(censored, hazard.t_end, tau)
    return CohortSample(hazard.x, tau, censored, hazard)


def lln_diagnostic(sample: CohortSample, t: float) -> dict:
    """Empirical survival fraction at t against exp(-Gamma(t))."""
    if sample.n == 0:
        raise DomainError("empty sample")
    if t > sample.hazard.t_end + _TOL:
        raise DomainError("t beyond the hazard path")
    alive = (sample.death_times > t) | sample.censored
    frac = float(np.mean(alive))
    model = float(np.exp(-sample.hazard(t)))
    return {"t": t, "empirical_fraction": frac, "model_G": model, "abs_error": abs(frac - model),
            "binomial_se": float(np.sqrt(model * (1 - model) / sample.n))}


def compensator_residual(sample: CohortSample, checkpoints: Sequence[float],
                         hazard_scale: float = 1.0) -> list[dict]:
    """Mean of 1{tau <= t} - Gamma(t ^ tau) across individuals per checkpoint.

    ``hazard_scale`` multiplies Gamma in the compensator (negative control).
    """
    out = []
    tau, cens = sample.death_times, sample.censored
    for t in checkpoints:
        if t > sample.hazard.t_end + _TOL:
            raise DomainError("checkpoint beyond the hazard path")
        died = (~cens) & (tau <= t)
        m = died.astype(float) - hazard_scale * sample.hazard(np.minimum(t, tau))
        se = float(np.std(m, ddof=1) / np.sqrt(len(m))) if len(m) > 1 else 0.0
        out.append({"t": float(t), "mean": float(np.mean(m)), "std_err": se})
    return out
