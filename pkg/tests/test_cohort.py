import numpy as np
import pytest

from fwdmort.cohort import (
    CumulativeHazard,
    accumulate_hazard,
    compensator_residual,
    hazard_from_spot,
    invert_hazard,
    lln_diagnostic,
    sample_death_times,
)
from fwdmort.drift import LevyScalarVol
from fwdmort.errors import DomainError
from fwdmort.levy import jump_diffusion_driver
from fwdmort.simulate import InitialSurfaces, ScenarioConfig, initial_state, step, survival
from fwdmort.surface import Surface, SurfaceGrid, gompertz_makeham_surfaces


def const_path(m, t_end=2.0, h=0.1):
    g = SurfaceGrid.from_extent(h, 3.0, 6.0)
    cfg = ScenarioConfig(g, jump_diffusion_driver(), LevyScalarVol(Surface.constant(g, 0.0)),
                         InitialSurfaces(mu0=Surface.constant(g, m)), dt=h, t_end=t_end)
    st = initial_state(cfg)
    path = [st]
    for _ in range(cfg.n_steps):
        st = step(st, cfg, np.random.default_rng(0))
        path.append(st)
    return path


# -- hazard accumulation -----------------------------------------------------

def test_constant_hazard_adult():
    haz = accumulate_hazard(const_path(0.05), 1.0)
    np.testing.assert_allclose(haz.values, 0.05 * haz.times, atol=1e-15)


def test_constant_hazard_unborn():
    haz = accumulate_hazard(const_path(0.05), -0.5)
    np.testing.assert_allclose(haz.values, 0.05 * np.clip(haz.times - 0.5, 0, None), atol=1e-15)


def test_gompertz_hazard_closed_form(gompertz):
    g = SurfaceGrid.from_extent(0.01, 1.0, 6.0)
    j0, mu0, g0 = gompertz_makeham_surfaces(gompertz, g)
    cfg = ScenarioConfig(g, jump_diffusion_driver(), LevyScalarVol(Surface.constant(g, 0.0)),
                         InitialSurfaces(mu0=mu0), dt=0.01, t_end=1.0)
    st = initial_state(cfg)
    path = [st]
    for _ in range(cfg.n_steps):
        st = step(st, cfg, np.random.default_rng(0))
        path.append(st)
    x = 2.0
    haz = accumulate_hazard(path, x)
    # zero volatility: gamma_s(x) = mu_0(s, x), so Gamma(t) = -log G_0(t, x)
    t1, t2, t3, t4, t5 = (gompertz.theta1, gompertz.theta2, gompertz.theta3, gompertz.theta4, gompertz.theta5)
    t = haz.times
    ex = t3 * np.exp(t4 * x)
    exact = t1 * ex * (np.exp(t4 * t) - 1) / t4 + t1 * t5 * t + ex * t + t5 * (1 - np.exp(-t2 * t)) / t2
    np.testing.assert_allclose(haz.values, exact, rtol=1e-5)
    assert np.exp(-haz(1.0)) == pytest.approx(survival(path[-1], 1.0, x), rel=1e-5)


def test_negative_spot_floored():
    haz = hazard_from_spot([0.0, 1.0, 2.0], [0.1, -0.2, 0.1], 0.0)
    assert haz.floored == 1
    np.testing.assert_allclose(haz.values, [0.0, 0.05, 0.1])


def test_birth_must_be_checkpoint():
    with pytest.raises(DomainError):
        hazard_from_spot([0.0, 1.0, 2.0], [0.1, 0.1, 0.1], -0.5)


def test_off_grid_cohort():
    with pytest.raises(DomainError):
        accumulate_hazard(const_path(0.05), 5.5)


# -- sampling ----------------------------------------------------------------

def test_exponential_law(rng):
    m = 0.5
    haz = CumulativeHazard.constant(m, 100.0)
    s = sample_death_times(haz, 100_000, rng)
    tau = s.death_times[~s.censored]
    se = tau.std(ddof=1) / np.sqrt(len(tau))
    assert abs(tau.mean() - 1 / m) <= 3 * se


def test_inversion_at_knot():
    haz = CumulativeHazard(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0.0, 0.2, 0.5, 1.0]))
    s = invert_hazard(haz, np.array([0.5, 0.35, 0.2]))
    np.testing.assert_allclose(s.death_times, [2.0, 1.5, 1.0])
    assert not s.censored.any()


def test_zero_hazard_all_censored(rng):
    haz = CumulativeHazard(np.array([0.0, 5.0]), np.array([0.0, 0.0]))
    s = sample_death_times(haz, 1000, rng)
    assert s.censored.all()
    assert np.all(s.death_times == 5.0)


def test_threshold_invariant_and_birth(rng):
    haz = accumulate_hazard(const_path(0.8), -0.5)
    eps = rng.standard_exponential(5000)
    s = invert_hazard(haz, eps)
    alive = ~s.censored
    assert np.all(haz(s.death_times[alive]) >= eps[alive] - 1e-12)
    assert np.all(s.death_times > 0.5)


def test_decreasing_hazard_rejected(rng):
    haz = CumulativeHazard(np.array([0.0, 1.0]), np.array([0.5, 0.1]))
    with pytest.raises(DomainError):
        sample_death_times(haz, 10, rng)
    with pytest.raises(DomainError):
        sample_death_times(CumulativeHazard.constant(1.0, 1.0), 0, rng)


def test_exchangeability(rng):
    haz = CumulativeHazard.constant(0.1, 20.0, n=21)
    s = sample_death_times(haz, 2000, rng)
    grid = np.linspace(0, 20, 11)
    before = [np.mean(s.death_times > t) for t in grid]
    perm = rng.permutation(s.n)
    after = [np.mean(s.death_times[perm] > t) for t in grid]
    assert before == after


# -- diagnostics -------------------------------------------------------------

def test_lln_constant_hazard(rng):
    haz = CumulativeHazard.constant(0.05, 20.0, n=21)
    s = sample_death_times(haz, 100_000, rng)
    d = lln_diagnostic(s, 10.0)
    p = np.exp(-0.5)
    assert d["model_G"] == pytest.approx(p)
    assert d["abs_error"] <= 3 * np.sqrt(p * (1 - p) / s.n)


def test_lln_at_zero(rng):
    s = sample_death_times(CumulativeHazard.constant(0.05, 5.0), 100, rng)
    d = lln_diagnostic(s, 0.0)
    assert d["empirical_fraction"] == 1.0 and d["model_G"] == 1.0 and d["abs_error"] == 0.0


def test_lln_rate():
    haz = CumulativeHazard.constant(0.05, 20.0, n=21)
    errs = []
    for n in (1000, 2000, 4000, 8000, 16000):
        e = [lln_diagnostic(sample_death_times(haz, n, np.random.default_rng(r)), 10.0)["abs_error"]
             for r in range(200)]
        errs.append(np.mean(e))
    slope = np.polyfit(np.log([1000, 2000, 4000, 8000, 16000]), np.log(errs), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


def test_lln_beyond_end(rng):
    s = sample_death_times(CumulativeHazard.constant(0.05, 5.0), 10, rng)
    with pytest.raises(DomainError):
        lln_diagnostic(s, 6.0)


def test_compensator_constant_hazard(rng):
    m = 0.05
    haz = CumulativeHazard.constant(m, 40.0, n=41)
    s = sample_death_times(haz, 100_000, rng)
    res = compensator_residual(s, [0.0, 5.0, 1 / m, 30.0, 40.0])
    assert res[0]["mean"] == 0.0
    for r in res[1:]:
        assert abs(r["mean"]) <= 3 * r["std_err"]


def test_compensator_negative_control(rng):
    haz = CumulativeHazard.constant(0.05, 40.0, n=41)
    s = sample_death_times(haz, 100_000, rng)
    r = compensator_residual(s, [40.0], hazard_scale=2.0)[0]
    assert abs(r["mean"]) > 5 * r["std_err"]


def test_compensator_with_censoring(rng):
    # half the thresholds exceed Gamma(t_end) = 0.69
    haz = CumulativeHazard.constant(0.069314718, 10.0, n=11)
    s = sample_death_times(haz, 50_000, rng)
    assert 0.45 < s.censored.mean() < 0.55
    for r in compensator_residual(s, [2.0, 6.0, 10.0]):
        assert abs(r["mean"]) <= 3 * r["std_err"]
