"""Time stepping of the mild-solution dynamics and ensemble diagnostics.

One step of length dt = m h is a splitting scheme: Euler increments with
coefficients frozen at the left end, then an exact grid shift by m rows.

Rates mode evolves mu with the consistent rate drift. Improvements mode
evolves j with the consistent improvement drift and, alongside it, mu with
coefficients alpha = -row(a), sigma = -row(b), delta = -row(c). The spot
curve is the s = 0 row of mu, so the identity
mu(s, y) = gamma(s + y) - int_0^s j(u, s + y - u) du can be monitored.

The hazard accumulator for a cohort adds int_0^dt mu_t(u, x + t) du each
step (trapezoid along the cohort's diagonal on the pre-step surface). It is
the forward piece that leaves the surface during the shift, so with zero
volatility G_t(T, x) is constant in t to rounding.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from .drift import (
    IMPROVEMENT_VOL,
    LevyScalarVol,
    VolatilityModel,
    _j_drift_array,
    _mu_drift_array,
    vol_j_to_vol_mu,
)
from .errors import ConfigError, DomainError, StaleRegionError
from .levy import LevyDriverSpec
from .surface import (
    Curve,
    Surface,
    SurfaceGrid,
    diag_cumtrapz,
    evaluate,
    improvements_to_rates,
    row_cumtrapz,
    shift_array,
    shift_mask,
)

log = logging.getLogger(__name__)

__all__ = [
    "InitialSurfaces",
    "ScenarioConfig",
    "PathState",
    "PathEnsemble",
    "Model",
    "initial_state",
    "step",
    "spot_rate",
    "survival",
    "simulate_ensemble",
    "martingale_diagnostic",
    "identity_diagnostic",
    "negativity_diagnostic",
]

RATES = "rates"
IMPROVEMENTS = "improvements"
_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class InitialSurfaces:
    """Either ``mu0`` alone, or ``j0`` with ``gamma0`` (mu0 then derived)."""

    mu0: Surface | None = None
    j0: Surface | None = None
    gamma0: Curve | None = None

    def __post_init__(self):
        if self.mu0 is None:
            if self.j0 is None or self.gamma0 is None:
                raise ConfigError("initial surfaces need mu0 or (j0, gamma0)")
            object.__setattr__(self, "mu0", improvements_to_rates(self.j0, self.gamma0))

    @property
    def grid(self) -> SurfaceGrid:
        return self.mu0.grid


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Everything needed to run an ensemble.

    ``observations`` lists (T, x) pairs whose forward survival G_t(T, x) is
    recorded at every checkpoint with t <= T; ``cohorts`` lists ages-at-0
    whose spot rates and accumulated hazards are recorded. ``drift="zero"``
    switches the consistency drift off (negative control).
    """

    grid: SurfaceGrid
    driver: LevyDriverSpec
    vol: VolatilityModel | LevyScalarVol
    initial: InitialSurfaces
    dt: float
    t_end: float
    n_paths: int = 1
    seed: int = 0
    mode: str = RATES
    drift: str = "consistent"
    checkpoint_every: int = 1
    observations: tuple[tuple[float, float], ...] = ()
    cohorts: tuple[float, ...] = ()
    keep_paths: int = 0

    def __post_init__(self):
        if self.mode not in (RATES, IMPROVEMENTS):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.drift not in ("consistent", "zero"):
            raise ConfigError(f"unknown drift setting {self.drift!r}")
        self.grid.check_same(self.vol.grid)
        self.grid.check_same(self.initial.grid)
        if self.mode == IMPROVEMENTS and self.initial.j0 is None:
            raise ConfigError("improvements mode needs j0 and gamma0")
        if self.mode == IMPROVEMENTS and self.vol.kind != IMPROVEMENT_VOL:
            raise ConfigError("improvements mode needs improvement volatilities")
        if not self.dt > 0 or not self.t_end > 0:
            raise ConfigError("dt and t_end must be positive")
        try:
            self.grid.steps(self.dt, "dt")
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        n = self.t_end / self.dt
        if abs(n - round(n)) > _TOL * max(1.0, n) or round(n) < 1:
            raise ConfigError("t_end must be a positive multiple of dt")
        if self.n_paths < 1 or self.checkpoint_every < 1:
            raise ConfigError("n_paths and checkpoint_every must be positive")
        object.__setattr__(self, "observations",
                           tuple((float(T), float(x)) for T, x in self.observations))
        object.__setattr__(self, "cohorts", tuple(float(x) for x in self.cohorts))

    @property
    def m(self) -> int:
        return self.grid.steps(self.dt, "dt")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def checkpoint_times(self) -> np.ndarray:
        k = np.arange(0, self.n_steps + 1, self.checkpoint_every)
        if k[-1] != self.n_steps:
            k = np.append(k, self.n_steps)
        return k * self.dt

    @cached_property
    def model(self) -> "Model":
        return Model.from_config(self)

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Model:
    """Precomputed coefficient arrays for the splitting scheme.

    ``sig``/``dlt``/``alpha`` drive mu; ``b``/``c``/``a`` drive j
    (improvements mode only). Loadings have shape (factors, n_s, n_z).
    """

    grid: SurfaceGrid
    driver: LevyDriverSpec
    mode: str
    m: int
    dt: float
    sig: np.ndarray
    dlt: np.ndarray
    alpha: np.ndarray
    b: np.ndarray | None = None
    c: np.ndarray | None = None
    a: np.ndarray | None = None

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "Model":
        drv, h = cfg.driver, cfg.grid.h
        vol = cfg.vol
        if isinstance(vol, LevyScalarVol):
            vol = vol.to_general(drv)
        vol.check_driver(drv)
        zero = cfg.drift == "zero"
        if cfg.mode == RATES:
            if vol.kind == IMPROVEMENT_VOL:
                vol = vol_j_to_vol_mu(vol)
            sig, dlt = vol.wiener_array(), vol.jump_array()
            alpha = np.zeros(cfg.grid.shape) if zero else _mu_drift_array(sig, dlt, drv.intensities, h)
            return cls(cfg.grid, drv, RATES, cfg.m, cfg.dt, sig, dlt, alpha)
        b, c = vol.wiener_array(), vol.jump_array()
        a = np.zeros(cfg.grid.shape) if zero else _j_drift_array(b, c, drv.intensities, h)
        return cls(
            cfg.grid, drv, IMPROVEMENTS, cfg.m, cfg.dt,
            sig=-row_cumtrapz(b, h), dlt=-row_cumtrapz(c, h), alpha=-row_cumtrapz(a, h),
            b=b, c=c, a=a,
        )

    def draw_noise(self, rng: np.random.Generator, n_steps: int):
        """Per-step Wiener increments and compensated jump counts."""
        d = self.driver
        dw = rng.standard_normal((n_steps, d.wiener_factors)) * np.sqrt(self.dt)
        dn = rng.poisson(d.intensities * self.dt, size=(n_steps, d.n_marks))
        return dw, dn - d.intensities * self.dt

    def advance(self, mu, j, acc, dw, dn):
        """One step on batched arrays.

        mu, j: (B, n_s, n_z); acc: (B, n_z); dw: (B, d); dn: (B, n_marks)
        (already compensated). Returns the new (mu, j, acc).
        """
        m, h = self.m, self.grid.h
        n_z = mu.shape[-1]
        # hazard accrued over the step: int_0^dt of the pre-step surface along each cohort diagonal
        accrued = diag_cumtrapz(mu[..., : m + 1, :], h)[..., m, :]
        new_acc = np.zeros_like(acc)
        new_acc[..., m:] = acc[..., : n_z - m]
        new_acc += accrued
        mu = mu + self.dt * self.alpha
        mu += np.einsum("bk,kij->bij", dw, self.sig) + np.einsum("bk,kij->bij", dn, self.dlt)
        mu = shift_array(mu, m)
        if j is not None:
            j = j + self.dt * self.a
            j += np.einsum("bk,kij->bij", dw, self.b) + np.einsum("bk,kij->bij", dn, self.c)
            j = shift_array(j, m)
        return mu, j, new_acc


@dataclass(frozen=True, eq=False)
class PathState:
    """State of one path at time t.

    ``gamma_path[j]`` is the hazard accumulated since time 0 (or birth) by
    the cohort whose current age is z_j; ``stale[i]`` flags horizon rows
    filled by the shift boundary policy.
    """

    t: float
    mu_bar: Surface
    j_bar: Surface | None
    gamma_path: np.ndarray
    stale: np.ndarray

    @property
    def grid(self) -> SurfaceGrid:
        return self.mu_bar.grid

    @property
    def valid_rows(self) -> int:
        return int(np.argmax(self.stale)) if self.stale.any() else len(self.stale)


def initial_state(cfg: ScenarioConfig) -> PathState:
    g = cfg.grid
    j0 = cfg.initial.j0 if cfg.mode == IMPROVEMENTS else None
    return PathState(0.0, cfg.initial.mu0, j0, np.zeros(g.n_z), np.zeros(g.n_s, dtype=bool))


def step(state: PathState, cfg: ScenarioConfig, rng: np.random.Generator | None = None,
         noise=None) -> PathState:
    """Advance one path by dt. ``noise=(dw, dn_compensated)`` overrides the draw."""
    if state.t + cfg.dt > cfg.t_end + _TOL:
        raise DomainError(f"step beyond t_end={cfg.t_end}")
    model = cfg.model
    if noise is None:
        if rng is None:
            raise ValueError("step needs an rng or explicit noise")
        dw, dn = model.draw_noise(rng, 1)
    else:
        dw, dn = (np.atleast_2d(np.asarray(v, dtype=float)) for v in noise)
    j = None if state.j_bar is None else state.j_bar.values[None]
    mu, j, acc = model.advance(state.mu_bar.values[None], j, state.gamma_path[None], dw, dn)
    g = state.grid
    return PathState(
        state.t + cfg.dt,
        Surface(g, mu[0]),
        None if j is None else Surface(g, j[0]),
        acc[0],
        shift_mask(state.stale, model.m),
    )


def spot_rate(state: PathState, y: float) -> float:
    """gamma_t(y) = mu_t(0, y)."""
    if y < -_TOL:
        raise DomainError("spot rate needs a nonnegative age")
    return evaluate(state.mu_bar, 0.0, y)


@dataclass(frozen=True)
class _SurvivalStencil:
    acc_index: int          # -1 when the cohort is not yet born
    k: np.ndarray           # horizon indices along the diagonal
    zj: np.ndarray          # terminal-age indices
    w: np.ndarray           # trapezoid weights


def _stencil(grid: SurfaceGrid, valid_rows: int, t: float, T: float, x: float) -> _SurvivalStencil:
    if T < max(-x, t) - _TOL:
        raise DomainError(f"survival needs T >= max(-x, t); got T={T}, x={x}, t={t}")
    y = x + t
    dy = grid.steps(y, "current age x + t")
    acc_index = dy if dy >= 0 else -1
    if acc_index >= grid.n_z:
        raise DomainError("cohort age outside the grid")
    k_lo = max(-dy, 0)
    k_hi = grid.steps(T - t, "horizon T - t")
    if k_hi <= k_lo:
        empty = np.zeros(0, dtype=int)
        return _SurvivalStencil(acc_index, empty, empty, np.zeros(0))
    if k_hi >= valid_rows:
        raise StaleRegionError(f"horizon {T - t} reaches rows filled by the shift boundary")
    k = np.arange(k_lo, k_hi + 1)
    zj = k + dy
    if zj[-1] >= grid.n_z:
        raise DomainError("terminal age outside the grid")
    w = np.full(len(k), grid.h)
    w[0] = w[-1] = 0.5 * grid.h
    return _SurvivalStencil(acc_index, k, zj, w)


def _log_survival(mu: np.ndarray, acc: np.ndarray, st: _SurvivalStencil) -> np.ndarray:
    out = mu[..., st.k, st.zj] @ st.w if len(st.k) else np.zeros(mu.shape[:-2])
    if st.acc_index >= 0:
        out = out + acc[..., st.acc_index]
    return -out


def survival(state: PathState, T: float, x: float) -> float:
    """G_t(T, x) = exp(-Gamma_t(t, x) - int_t^T mu_t(u, x) du).

    Not clamped: values above 1 signal negative simulated rates.
    """
    st = _stencil(state.grid, state.valid_rows, state.t, T, x)
    return float(np.exp(_log_survival(state.mu_bar.values, state.gamma_path, st)))


# -- ensembles ---------------------------------------------------------------


@dataclass(eq=False)
class PathEnsemble:
    """Checkpointed observables of an ensemble.

    survival: (n_paths, n_checkpoints, n_obs), NaN where T < t.
    spot, hazard: (n_paths, n_checkpoints, n_cohorts), NaN before birth.
    identity: per-checkpoint sup over paths (NaN in rates mode).
    """

    config: ScenarioConfig
    times: np.ndarray
    observations: tuple[tuple[float, float], ...]
    cohorts: tuple[float, ...]
    survival: np.ndarray
    spot: np.ndarray
    hazard: np.ndarray
    identity: np.ndarray
    negative_nodes: int
    total_nodes: int
    min_value: float
    kept: list[list[PathState]] = field(default_factory=list)

    @property
    def n_paths(self) -> int:
        return self.survival.shape[0]

    def checkpoint_index(self, t: float) -> int:
        idx = np.flatnonzero(np.abs(self.times - t) <= _TOL * max(1.0, abs(t)))
        if not len(idx):
            raise DomainError(f"no checkpoint at t={t}")
        return int(idx[0])

    def observation_index(self, T: float, x: float) -> int:
        for i, (TT, xx) in enumerate(self.observations):
            if abs(TT - T) <= _TOL and abs(xx - x) <= _TOL:
                return i
        raise DomainError(f"(T={T}, x={x}) was not observed")

    def cohort_index(self, x: float) -> int:
        for i, xx in enumerate(self.cohorts):
            if abs(xx - x) <= _TOL:
                return i
        raise DomainError(f"cohort x={x} was not recorded")


def _identity_error(mu: np.ndarray, j: np.ndarray, h: float, valid_rows: int) -> float:
    err = mu - mu[..., :1, :] + row_cumtrapz(j, h)
    return float(np.max(np.abs(err[..., :valid_rows, :])))


def _run_chunk(cfg: ScenarioConfig, path_ids: Sequence[int], ck_steps: np.ndarray, stencils):
    model = cfg.model
    g = cfg.grid
    B = len(path_ids)
    n_steps = cfg.n_steps
    noise = [model.draw_noise(np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(int(p),))),
                              n_steps) for p in path_ids]
    dw = np.stack([n[0] for n in noise])
    dn = np.stack([n[1] for n in noise])
    mu = np.broadcast_to(cfg.initial.mu0.values, (B,) + g.shape).copy()
    j = None
    if cfg.mode == IMPROVEMENTS:
        j = np.broadcast_to(cfg.initial.j0.values, (B,) + g.shape).copy()
    acc = np.zeros((B, g.n_z))
    stale = np.zeros(g.n_s, dtype=bool)

    n_ck = len(ck_steps)
    n_obs, n_coh = len(cfg.observations), len(cfg.cohorts)
    surv = np.full((B, n_ck, n_obs), np.nan)
    spot = np.full((B, n_ck, n_coh), np.nan)
    haz = np.full((B, n_ck, n_coh), np.nan)
    ident = np.full(n_ck, np.nan)
    neg = total = 0
    min_value = np.inf
    keep = [p for p in path_ids if p < cfg.keep_paths]
    kept = {p: [] for p in keep}

    c = 0
    for n in range(n_steps + 1):
        if c < n_ck and ck_steps[c] == n:
            t = n * cfg.dt
            valid = int(np.argmax(stale)) if stale.any() else g.n_s
            for o, st in enumerate(stencils[c]):
                if st is not None:
                    surv[:, c, o] = np.exp(_log_survival(mu, acc, st))
            for q, x in enumerate(cfg.cohorts):
                dy = g.steps(x + t, "cohort age")
                if 0 <= dy < g.n_z:
                    spot[:, c, q] = mu[:, 0, dy]
                    haz[:, c, q] = acc[:, dy]
            live = mu[:, :valid, :]
            neg += int(np.count_nonzero(live < 0))
            total += live.size
            min_value = min(min_value, float(live.min()))
            if j is not None:
                ident[c] = _identity_error(mu, j, g.h, valid)
            for b, p in enumerate(path_ids):
                if p in kept:
                    kept[p].append(PathState(
                        t, Surface(g, mu[b]), None if j is None else Surface(g, j[b]),
                        acc[b].copy(), stale.copy()))
            c += 1
        if n == n_steps:
            break
        mu, j, acc = model.advance(mu, j, acc, dw[:, n], dn[:, n])
        stale = shift_mask(stale, model.m)
    return surv, spot, haz, ident, neg, total, min_value, kept


def simulate_ensemble(cfg: ScenarioConfig, threads: int = 1, chunk_nodes: int = 4_000_000) -> PathEnsemble:
    """Run ``cfg.n_paths`` independent paths.

    Path p draws its noise from ``SeedSequence(seed, spawn_key=(p,))``, so
    results do not depend on chunking or thread count.
    """
    g = cfg.grid
    times = cfg.checkpoint_times()
    ck_steps = np.rint(times / cfg.dt).astype(int)
    # survival stencils depend only on (checkpoint, observation); stale rows are deterministic
    stencils = []
    stale = np.zeros(g.n_s, dtype=bool)
    n_prev = 0
    for n in ck_steps:
        for _ in range(n - n_prev):
            stale = shift_mask(stale, cfg.m)
        n_prev = n
        valid = int(np.argmax(stale)) if stale.any() else g.n_s
        t = n * cfg.dt
        row = []
        for T, x in cfg.observations:
            row.append(None if T < t - _TOL else _stencil(g, valid, t, T, x))
        stencils.append(row)

    chunk = max(1, min(cfg.n_paths, chunk_nodes // (g.n_s * g.n_z * (2 if cfg.mode == IMPROVEMENTS else 1))))
    groups = [list(range(i, min(i + chunk, cfg.n_paths))) for i in range(0, cfg.n_paths, chunk)]
    log.info("simulating %d paths in %d chunks", cfg.n_paths, len(groups))
    if threads > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda ids: _run_chunk(cfg, ids, ck_steps, stencils), groups))
    else:
        results = [_run_chunk(cfg, ids, ck_steps, stencils) for ids in groups]

    kept = {}
    for r in results:
        kept.update(r[7])
    ident = np.stack([r[3] for r in results])
    return PathEnsemble(
        config=cfg,
        times=times,
        observations=cfg.observations,
        cohorts=cfg.cohorts,
        survival=np.concatenate([r[0] for r in results]),
        spot=np.concatenate([r[1] for r in results]),
        hazard=np.concatenate([r[2] for r in results]),
        identity=np.max(ident, axis=0) if cfg.mode == IMPROVEMENTS else np.full(len(times), np.nan),
        negative_nodes=sum(r[4] for r in results),
        total_nodes=sum(r[5] for r in results),
        min_value=min(r[6] for r in results),
        kept=[kept[p] for p in sorted(kept)],
    )


def martingale_diagnostic(ens: PathEnsemble, t: float, T: float, x: float) -> dict:
    """Mean of G_t(T, x) across paths against G_0(T, x)."""
    if ens.n_paths < 2:
        raise DomainError("martingale diagnostic needs at least 2 paths")
    o = ens.observation_index(T, x)
    g_t = ens.survival[:, ens.checkpoint_index(t), o]
    g_0 = ens.survival[0, ens.checkpoint_index(0.0), o]
    if np.any(np.isnan(g_t)):
        raise DomainError(f"G_t(T, x) not recorded at t={t} (T < t?)")
    mean = float(np.mean(g_t))
    se = float(np.std(g_t, ddof=1) / np.sqrt(len(g_t)))
    diff = mean - g_0
    tiny = 1e-12 * max(1.0, abs(g_0))
    if se > tiny:
        z = diff / se
    else:
        z = 0.0 if abs(diff) <= tiny else float(np.sign(diff) * np.inf)
    return {"t": t, "T": T, "x": x, "mean": mean, "std_err": se, "z_score": float(z), "G0": float(g_0)}


def identity_diagnostic(state: PathState) -> float:
    """sup |mu(s, y) - gamma(s + y) + int_0^s j(u, s + y - u) du| over live rows."""
    if state.j_bar is None:
        raise ConfigError("identity diagnostic needs an improvements-mode state")
    return _identity_error(state.mu_bar.values, state.j_bar.values, state.grid.h, state.valid_rows)


def negativity_diagnostic(ens) -> dict:
    """Fraction of (path, checkpoint, live node) triples with mu < 0.

    Accepts a :class:`PathEnsemble` or a sequence of :class:`PathState`.
    """
    if isinstance(ens, PathEnsemble):
        neg, total, lo = ens.negative_nodes, ens.total_nodes, ens.min_value
    else:
        neg = total = 0
        lo = np.inf
        for st in ens:
            live = st.mu_bar.values[: st.valid_rows]
            neg += int(np.count_nonzero(live < 0))
            total += live.size
            lo = min(lo, float(live.min()))
    return {"fraction_negative_nodes": neg / total if total else 0.0, "min_value": float(lo)}
