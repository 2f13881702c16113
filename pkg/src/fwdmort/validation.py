"""Diagnostic battery: drift oracles, martingale bands, LLN, compensator, identity.

Each check returns a dict with a boolean ``passed`` and the measured
quantities, so the CLI can write them to a report and tests can assert on
the numbers.
"""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .cohort import CumulativeHazard, compensator_residual, lln_diagnostic, sample_death_times
from .drift import (
    IMPROVEMENT_VOL,
    RATE_VOL,
    drift_j_levy,
    drift_mu_levy,
    example_surface,
    example_vol,
)
from .levy import LevyDriverSpec, jump_diffusion_driver
from .simulate import ScenarioConfig, martingale_diagnostic, negativity_diagnostic, simulate_ensemble
from .surface import (
    GompertzParams,
    SurfaceGrid,
    gompertz_makeham_surfaces,
    improvements_to_rates,
    rates_to_improvements,
)

log = logging.getLogger(__name__)

__all__ = [
    "oracle_error",
    "check_drift_oracles",
    "check_transform_roundtrip",
    "check_gompertz_identity",
    "check_martingale",
    "check_identity",
    "check_lln",
]

ORACLE_FIELDS = {"mu": ("alpha", RATE_VOL), "j": ("a", IMPROVEMENT_VOL)}
# errors below this relative level are roundoff; no convergence rate is expected there
ROUNDOFF_FLOOR = 1e-10


def oracle_error(which: int, field: str, h: float, driver: LevyDriverSpec | None = None,
                 s_max: float = 3.0, z_max: float = 6.0) -> float:
    """sup|numeric - exact| / sup|exact| for one example drift."""
    driver = driver or jump_diffusion_driver()
    grid = SurfaceGrid.from_extent(h, s_max, z_max)
    name, kind = ORACLE_FIELDS[field]
    vol = example_vol(which, grid, kind)
    num = drift_mu_levy(vol, driver) if field == "mu" else drift_j_levy(vol, driver)
    exact = example_surface(which, name, grid, driver)
    return (num - exact).sup_norm() / max(exact.sup_norm(), 1e-300)


def check_drift_oracles(h: float = 0.02, tol: float = 1e-3, min_ratio: float = 3.5,
                        examples: Sequence[int] = (1, 2, 3)) -> dict:
    rows = []
    for which in examples:
        for field in ORACLE_FIELDS:
            e = oracle_error(which, field, h)
            e_half = oracle_error(which, field, h / 2)
            ratio = e / e_half if e_half > 0 else np.inf
            converges = e <= ROUNDOFF_FLOOR or ratio >= min_ratio
            rows.append({"example": which, "field": field, "rel_error": e,
                         "rel_error_half": e_half, "ratio": ratio,
                         "passed": bool(e <= tol and converges)})
    return {"name": "drift_oracles", "passed": all(r["passed"] for r in rows), "cases": rows}


GOMPERTZ_DEFAULT = GompertzParams(2.0, 0.1, 1e-4, 0.1, 1e-3)


def _gompertz_grid(h: float) -> SurfaceGrid:
    return SurfaceGrid.from_extent(h, 3.0, 6.0)


def check_transform_roundtrip(h: float = 0.02, p: GompertzParams = GOMPERTZ_DEFAULT) -> dict:
    """rates_to_improvements(improvements_to_rates(j0)) against j0."""
    grid = _gompertz_grid(h)
    j0, _, g0 = gompertz_makeham_surfaces(p, grid)
    back = rates_to_improvements(improvements_to_rates(j0, g0))
    err = (back - j0).sup_norm()
    s, y = grid.mesh()
    decay = p.theta2 * np.exp(-p.theta2 * s)
    dm = p.theta3 * p.theta4 * np.exp(p.theta4 * (s + y))
    d_s = decay * (dm - p.theta2 * p.makeham(s + y))
    d_y = decay * dm
    bound = 5 * h * float(max(np.abs(d_s).max(), np.abs(d_y).max()))
    return {"name": "transform_roundtrip", "passed": bool(err <= bound), "error": err, "bound": bound}


def check_gompertz_identity(h: float = 0.02, tol: float = 1e-4,
                            p: GompertzParams = GOMPERTZ_DEFAULT) -> dict:
    grid = _gompertz_grid(h)
    j0, mu0, g0 = gompertz_makeham_surfaces(p, grid)
    err = (improvements_to_rates(j0, g0) - mu0).sup_norm()
    return {"name": "gompertz_identity", "passed": bool(err <= tol), "error": err, "tol": tol}


def martingale_triples(cfg: ScenarioConfig, checkpoints: Sequence[float]):
    return [(t, T, x) for T, x in cfg.observations for t in checkpoints if t <= T + 1e-9]


def check_martingale(cfg: ScenarioConfig, checkpoints: Sequence[float], z_band: float = 3.0,
                     min_pass_fraction: float = 0.95, control_scale: float = 3.0,
                     control_z: float = 5.0, threads: int = 1) -> dict:
    """z-score band for the consistent model plus a zero-drift power check.

    The control reruns ``cfg`` with the drift switched off and the
    volatility multiplied by ``control_scale``; it passes when some triple
    at the last checkpoint has |z| > ``control_z``.
    """
    triples = martingale_triples(cfg, checkpoints)
    ens = simulate_ensemble(cfg, threads=threads)
    rows = [martingale_diagnostic(ens, t, T, x) for t, T, x in triples]
    inside = sum(abs(r["z_score"]) <= z_band for r in rows)
    need = int(np.ceil(min_pass_fraction * len(rows)))

    ctrl_cfg = cfg.with_(drift="zero", vol=cfg.vol.scaled(control_scale))
    ctrl = simulate_ensemble(ctrl_cfg, threads=threads)
    t_last = max(checkpoints)
    ctrl_rows = [martingale_diagnostic(ctrl, t, T, x) for t, T, x in triples if abs(t - t_last) < 1e-9]
    ctrl_max = max(abs(r["z_score"]) for r in ctrl_rows) if ctrl_rows else 0.0
    band_ok = inside >= need
    ctrl_ok = ctrl_max > control_z
    return {
        "name": "martingale_band",
        "passed": bool(band_ok and ctrl_ok),
        "inside_band": int(inside),
        "required": need,
        "n_triples": len(rows),
        "band_passed": bool(band_ok),
        "control_max_abs_z": float(ctrl_max),
        "control_passed": bool(ctrl_ok),
        "triples": rows,
        "negativity": negativity_diagnostic(ens),
    }


def check_identity(cfg: ScenarioConfig, factor: float = 10.0, threads: int = 1) -> dict:
    """sup |mu - gamma + int j| against factor (dt + h^2) scale at each checkpoint.

    ``scale`` is sup|mu0|, which makes the bound invariant under rescaling
    the surfaces.
    """
    ens = simulate_ensemble(cfg, threads=threads)
    scale = cfg.initial.mu0.sup_norm()
    bound = factor * (cfg.dt + cfg.grid.h**2) * scale
    worst = float(np.max(ens.identity))
    return {"name": "identity", "passed": bool(worst <= bound), "max_error": worst,
            "per_checkpoint": ens.identity.tolist(), "bound": bound, "dt": cfg.dt, "h": cfg.grid.h}


def check_lln(m: float = 0.05, n: int = 100_000, t: float = 10.0, t_end: float = 40.0,
              checkpoints: Sequence[float] | None = None, seed: int = 0,
              band: float = 3.0, control_scale: float = 2.0, control_se: float = 5.0) -> dict:
    """Constant-hazard cohort: survival fraction and compensator residuals."""
    rng = np.random.default_rng(seed)
    haz = CumulativeHazard.constant(m, t_end, n=int(round(t_end)) + 1)
    sample = sample_death_times(haz, n, rng)
    lln = lln_diagnostic(sample, t)
    lln_ok = lln["abs_error"] <= band * lln["binomial_se"]
    if checkpoints is None:
        checkpoints = np.linspace(0.0, t_end, 9)
    res = compensator_residual(sample, checkpoints)
    comp_ok = all(abs(r["mean"]) <= band * r["std_err"] or r["std_err"] == 0 and r["mean"] == 0
                  for r in res)
    ctrl = compensator_residual(sample, checkpoints, hazard_scale=control_scale)
    ctrl_max = max(abs(r["mean"]) / r["std_err"] for r in ctrl if r["std_err"] > 0)
    ctrl_ok = ctrl_max > control_se
    return {"name": "lln_compensator", "passed": bool(lln_ok and comp_ok and ctrl_ok),
            "lln": lln, "lln_passed": bool(lln_ok), "compensator": res,
            "compensator_passed": bool(comp_ok), "control_max_se": float(ctrl_max),
            "control_passed": bool(ctrl_ok)}
