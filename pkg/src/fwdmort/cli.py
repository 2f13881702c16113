"""Command-line entry point: ``fwdmort <subcommand> --config CFG --out DIR``.

Subcommands: simulate, drift-table, cohort, price, validate. All outputs
are written to a scratch directory and moved into ``--out`` only when the
run succeeds, together with ``manifest.json``.

Exit status: 0 success, 2 configuration error, 3 domain error,
4 diagnostic failure.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import os
import shutil
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .cohort import CumulativeHazard, compensator_residual, hazard_from_spot, lln_diagnostic, sample_death_times
from .config import RunConfig, load_config
from .drift import IMPROVEMENT_VOL, drift_j_levy, drift_mu_levy, example_surface, vol_j_to_vol_mu
from .errors import ConfigError, DiagnosticFailure, DomainError
from .io import read_table, write_json, write_surface, write_table
from .pricing import DiscountCurve
from .simulate import IMPROVEMENTS, martingale_diagnostic, negativity_diagnostic, simulate_ensemble
from . import validation

log = logging.getLogger("fwdmort")

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN, EXIT_DIAGNOSTIC = 0, 2, 3, 4


class _Run:
    """Collects output files in a scratch directory."""

    def __init__(self, scratch: Path):
        self.dir = scratch
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        p = self.dir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(name)
        return p


# -- subcommands --------------------------------------------------------------

def _simulate(rc: RunConfig, run: _Run, threads: int) -> None:
    cfg = rc.scenario()
    ens = simulate_ensemble(cfg, threads=threads)
    rows = []
    for T, x in cfg.observations:
        for t in ens.times:
            if t <= T + 1e-9:
                d = martingale_diagnostic(ens, t, T, x) if cfg.n_paths > 1 else None
                g = ens.survival[:, ens.checkpoint_index(t), ens.observation_index(T, x)]
                mean = float(np.mean(g))
                rows.append((t, T, x, mean, float(np.mean(np.clip(g, 0.0, 1.0))),
                             d["std_err"] if d else 0.0, d["z_score"] if d else 0.0))
    write_table(run.path("summary.csv"),
                ["t", "T", "x", "mean_G", "mean_G_clamped", "std_err", "z"], rows)
    crows = []
    for q, x in enumerate(cfg.cohorts):
        for c, t in enumerate(ens.times):
            crows.append((t, x, np.nanmean(ens.spot[:, c, q]), np.nanmean(ens.hazard[:, c, q])))
    if crows:
        write_table(run.path("cohorts.csv"), ["t", "x", "mean_spot", "mean_hazard"], crows)
    for p, states in enumerate(ens.kept):
        for st in states:
            write_surface(run.path(f"paths/path{p}_t{st.t:.6g}_mu.csv"), st.mu_bar)
            run.files.append(f"paths/path{p}_t{st.t:.6g}_mu.json")
    write_json(run.path("diagnostics.json"), {
        "identity_sup_norm": ens.identity.tolist(),
        "negativity": negativity_diagnostic(ens),
        "n_paths": cfg.n_paths,
        "checkpoints": ens.times.tolist(),
    })


def _drift_table(rc: RunConfig, run: _Run) -> None:
    sec = rc.raw.get("drift_table", {})
    field = sec.get("field", "mu")
    grid, driver = rc.grid(), rc.driver()
    vol = rc.volatility(grid)
    if field == "mu":
        if vol.kind == IMPROVEMENT_VOL:
            vol = vol_j_to_vol_mu(vol)
        drift = drift_mu_levy(vol, driver)
    else:
        if vol.kind != IMPROVEMENT_VOL:
            raise ConfigError("the improvement drift needs improvement_vol loadings")
        drift = drift_j_levy(vol, driver)
    write_surface(run.path(f"drift_{field}.csv"), drift)
    run.files.append(f"drift_{field}.json")
    report = {"field": field, "sup_norm": drift.sup_norm()}
    if "example" in sec:
        exact = example_surface(sec["example"], "alpha" if field == "mu" else "a", grid, driver)
        scale = float(rc.raw["volatility"].get("scale", 1.0))
        if scale != 1.0:
            report["note"] = "volatility scale differs from 1; oracle residual not meaningful"
        err = (drift - exact).sup_norm()
        report.update({"example": sec["example"], "oracle_sup_error": err,
                       "oracle_rel_error": err / max(exact.sup_norm(), 1e-300)})
    write_json(run.path("drift_report.json"), report)


def _cohort_hazard(rc: RunConfig, sec: dict) -> CumulativeHazard:
    x = float(sec["x"])
    if "constant_hazard" in sec:
        t_end = float(sec.get("t_end", rc.section("simulation")["t_end"] if "simulation" in rc.raw else 1.0))
        return CumulativeHazard.constant(sec["constant_hazard"], t_end, n=max(2, int(np.ceil(t_end)) + 1), x=x)
    p = int(sec.get("path", 0))
    cfg = rc.scenario(n_paths=p + 1, checkpoint_every=1, cohorts=(x,), observations=(), keep_paths=0)
    ens = simulate_ensemble(cfg)
    return hazard_from_spot(ens.times, ens.spot[p, :, 0], x)


def _cohort(rc: RunConfig, run: _Run) -> None:
    sec = rc.section("cohort")
    haz = _cohort_hazard(rc, sec)
    rng = np.random.default_rng(int(sec.get("seed", 0)))
    sample = sample_death_times(haz, int(sec["n"]), rng)
    write_table(run.path("deaths.csv"), ["index", "tau", "censored"],
                zip(range(sample.n), sample.death_times, sample.censored))
    cps = sec.get("checkpoints") or list(haz.times)
    write_json(run.path("cohort_report.json"), {
        "x": sample.x,
        "n": sample.n,
        "censored_fraction": float(np.mean(sample.censored)),
        "floored_spot_knots": haz.floored,
        "hazard": {"t": haz.times.tolist(), "Gamma": haz.values.tolist()},
        "lln": [lln_diagnostic(sample, t) for t in cps],
        "compensator": compensator_residual(sample, cps),
    })


def _curve(rc: RunConfig, sec: dict) -> DiscountCurve:
    if "curve_csv" in sec:
        tab = read_table(rc._path(sec["curve_csv"]), ["t", "r"])
        return DiscountCurve(tab["t"], tab["r"])
    return DiscountCurve.flat(float(sec.get("flat_rate", 0.0)))


def _price(rc: RunConfig, run: _Run, threads: int) -> None:
    sec = rc.section("price")
    curve = _curve(rc, sec)
    obs = sorted({(float(T), float(ins["x"])) for ins in sec["instruments"] for T in ins["dates"]})
    cfg = rc.scenario(observations=tuple(obs), cohorts=())
    times = [float(t) for t in sec.get("valuation_times", [0.0])]
    ck = set(np.round(cfg.checkpoint_times(), 9))
    for t in times:
        if round(t, 9) not in ck:
            raise ConfigError(f"valuation time {t} is not a simulation checkpoint")
    ens = simulate_ensemble(cfg, threads=threads)
    rows = []
    for k, ins in enumerate(sec["instruments"]):
        name = ins.get("name", f"instrument{k}")
        for t in times:
            # only payments still outstanding at t are valued
            dates = [float(T) for T in ins["dates"] if T >= t - 1e-9]
            c = ens.checkpoint_index(t)
            vals = np.zeros(ens.n_paths)
            for T in dates:
                g = ens.survival[:, c, ens.observation_index(T, float(ins["x"]))]
                vals += curve.discount(t, T) * g
            se = float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
            rows.append((name, ins["type"], ins["x"], t, len(dates), float(np.mean(vals)), se))
    with run.path("prices.csv").open("w") as fh:
        fh.write("name,type,x,t,n_dates,mean_price,std_err\n")
        for r in rows:
            fh.write(f"{r[0]},{r[1]},{r[2]:.12g},{r[3]:.12g},{r[4]},{r[5]:.12g},{r[6]:.12g}\n")


def _validate(rc: RunConfig, run: _Run, threads: int) -> bool:
    v = rc.raw.get("validate", {})
    checks = [
        validation.check_drift_oracles(h=v.get("oracle_h", 0.02), tol=v.get("oracle_tol", 1e-3)),
        validation.check_transform_roundtrip(),
        validation.check_gompertz_identity(),
    ]
    cfg = rc.scenario()
    cps = v.get("martingale_checkpoints") or [t for t in cfg.checkpoint_times() if t > 0]
    checks.append(validation.check_martingale(
        cfg, cps, z_band=v.get("z_band", 3.0), min_pass_fraction=v.get("min_pass_fraction", 0.95),
        control_scale=v.get("control_scale", 3.0), control_z=v.get("control_z", 5.0), threads=threads))
    seed = int(rc.raw.get("simulation", {}).get("seed", 0))
    checks.append(validation.check_lln(n=int(v.get("lln_n", 100_000)), seed=seed))
    if cfg.initial.j0 is not None:
        icfg = rc.scenario(mode=IMPROVEMENTS, vol=rc.volatility(kind=IMPROVEMENT_VOL),
                           n_paths=int(v.get("identity_paths", 200)), observations=(), cohorts=())
        checks.append(validation.check_identity(icfg, threads=threads))
    passed = all(c["passed"] for c in checks)
    write_json(run.path("validation_report.json"), {"passed": passed, "checks": checks})
    for c in checks:
        log.info("%s: %s", c["name"], "PASS" if c["passed"] else "FAIL")
    return passed


# -- plumbing -----------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _finish(run: _Run, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name in run.files:
        dst = out / name
        dst.parent.mkdir(parents=True, exist_ok=True)
        os.replace(run.dir / name, dst)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fwdmort", description="Forward mortality surface simulation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "drift-table", "cohort", "price", "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="JSON run configuration")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--paths", type=int, help="override the number of paths")
        p.add_argument("--threads", type=int, default=1, help="worker threads for path chunks")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get("FME_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    started = datetime.now(timezone.utc).isoformat()
    scratch = None
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if args.paths is not None and args.paths < 1:
            raise ConfigError("--paths must be positive")
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        rc = load_config(args.config).with_overrides(seed=args.seed, paths=args.paths)
        args.out.parent.mkdir(parents=True, exist_ok=True)
        scratch = Path(tempfile.mkdtemp(prefix=".fwdmort-", dir=args.out.parent))
        r = _Run(scratch)
        ok = True
        if args.command == "simulate":
            _simulate(rc, r, args.threads)
        elif args.command == "drift-table":
            _drift_table(rc, r)
        elif args.command == "cohort":
            _cohort(rc, r)
        elif args.command == "price":
            _price(rc, r, args.threads)
        else:
            ok = _validate(rc, r, args.threads)
        write_json(r.path("manifest.json"), {
            "command": args.command,
            "config_hash": rc.hash,
            "seed": rc.raw.get("simulation", {}).get("seed", rc.raw.get("cohort", {}).get("seed")),
            "tool_version": __version__,
            "started": started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "outputs": {n: _sha256(scratch / n) for n in r.files if n != "manifest.json"},
        })
        _finish(r, args.out)
        if not ok:
            raise DiagnosticFailure("validation failed; see validation_report.json")
        return EXIT_OK
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except DomainError as exc:
        log.error("domain error: %s", exc)
        return EXIT_DOMAIN
    except DiagnosticFailure as exc:
        log.error("%s", exc)
        return EXIT_DIAGNOSTIC
    finally:
        if scratch is not None:
            shutil.rmtree(scratch, ignore_errors=True)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
