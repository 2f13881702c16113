import numpy as np
import pytest

from fwdmort.drift import LevyScalarVol, example_vol
from fwdmort.errors import DomainError
from fwdmort.levy import jump_diffusion_driver
from fwdmort.pricing import DiscountCurve, annuity_value, survivor_bond_price
from fwdmort.simulate import (
    InitialSurfaces,
    ScenarioConfig,
    initial_state,
    martingale_diagnostic,
    simulate_ensemble,
    survival,
)
from fwdmort.surface import Surface, SurfaceGrid, gompertz_makeham_surfaces


@pytest.fixture
def grid():
    return SurfaceGrid.from_extent(0.1, 12.0, 20.0)


def const_state(grid, m):
    cfg = ScenarioConfig(grid, jump_diffusion_driver(), LevyScalarVol(Surface.constant(grid, 0.0)),
                         InitialSurfaces(mu0=Surface.constant(grid, m)), dt=0.1, t_end=1.0)
    return initial_state(cfg)


def test_curve_integral_exact():
    c = DiscountCurve(np.array([0.0, 1.0, 3.0]), np.array([0.01, 0.02, 0.05]))
    assert c.integral(0.5) == pytest.approx(0.005)
    assert c.integral(2.0) == pytest.approx(0.01 + 0.02)
    assert c.integral(5.0) == pytest.approx(0.01 + 0.04 + 0.1)
    assert c.discount(1.0, 5.0) == pytest.approx(np.exp(-0.14))


@pytest.mark.parametrize("knots,rates", [([0.5], [0.01]), ([0.0, 0.0], [0.01, 0.02]),
                                         ([0.0], [np.inf]), ([0.0, 1.0], [0.01])])
def test_curve_validation(knots, rates):
    with pytest.raises(DomainError):
        DiscountCurve(np.array(knots), np.array(rates))


def test_zero_rate_price_is_survival(grid, gompertz):
    j0, mu0, g0 = gompertz_makeham_surfaces(gompertz, grid)
    cfg = ScenarioConfig(grid, jump_diffusion_driver(), LevyScalarVol(Surface.constant(grid, 0.0)),
                         InitialSurfaces(mu0=mu0), dt=0.1, t_end=1.0)
    st = initial_state(cfg)
    assert survivor_bond_price(st, DiscountCurve.flat(0.0), 0.0, 5.0, 3.0) == survival(st, 5.0, 3.0)


def test_unborn_cohort_pure_discount(grid):
    st = const_state(grid, 0.02)
    price = survivor_bond_price(st, DiscountCurve.flat(0.03), 0.0, 10.0, -10.0)
    assert price == pytest.approx(np.exp(-0.3), rel=1e-14)


def test_constant_hazard_price(grid):
    st = const_state(grid, 0.02)
    T = 7.0
    assert survivor_bond_price(st, DiscountCurve.flat(0.03), 0.0, T, 1.0) == pytest.approx(
        np.exp(-(0.03 + 0.02) * T), rel=1e-13)


def test_price_errors(grid):
    st = const_state(grid, 0.02)
    with pytest.raises(DomainError):
        survivor_bond_price(st, DiscountCurve.flat(0.03), 0.5, 3.0, 1.0)
    with pytest.raises(DomainError):
        survivor_bond_price(st, DiscountCurve.flat(0.03), 0.0, -1.0, 1.0)
    with pytest.raises(DomainError):
        survivor_bond_price(st, DiscountCurve.flat(0.03), 0.0, 3.0, 19.0)


def test_annuity(grid):
    st = const_state(grid, 0.02)
    c = DiscountCurve.flat(0.03)
    assert annuity_value(st, c, 0.0, [4.0], 1.0) == survivor_bond_price(st, c, 0.0, 4.0, 1.0)
    assert annuity_value(st, c, 0.0, [], 1.0) == 0.0
    expected = sum(np.exp(-0.05 * k) for k in (1, 2, 3))
    assert annuity_value(st, c, 0.0, [1.0, 2.0, 3.0], 1.0) == pytest.approx(expected, rel=1e-13)


def test_price_nonincreasing_in_maturity(grid, gompertz):
    j0, mu0, g0 = gompertz_makeham_surfaces(gompertz, grid)
    cfg = ScenarioConfig(grid, jump_diffusion_driver(), LevyScalarVol(Surface.constant(grid, 0.0)),
                         InitialSurfaces(mu0=mu0), dt=0.1, t_end=1.0)
    st = initial_state(cfg)
    prices = [survivor_bond_price(st, DiscountCurve.flat(0.02), 0.0, T, 2.0) for T in np.arange(0, 10, 0.5)]
    assert np.all(np.diff(prices) <= 0)


def test_discounted_price_martingale(gompertz):
    """Mean of the t-price equals the 0-price grown by the deterministic discount."""
    g = SurfaceGrid.from_extent(0.1, 2.0, 6.0)
    j0, mu0, g0 = gompertz_makeham_surfaces(gompertz, g)
    cfg = ScenarioConfig(g, jump_diffusion_driver(), example_vol(1, g).scaled(0.5),
                         InitialSurfaces(j0=j0, gamma0=g0), dt=0.1, t_end=1.0, n_paths=2000, seed=4,
                         observations=((1.5, 1.0),), checkpoint_every=5)
    ens = simulate_ensemble(cfg)
    d = martingale_diagnostic(ens, 1.0, 1.5, 1.0)
    curve = DiscountCurve.flat(0.03)
    # price_t = D(t, T) G_t; E[price_t] = D(t, T) G_0 = price_0 / D(0, t)
    mean_t = curve.discount(1.0, 1.5) * d["mean"]
    p0 = curve.discount(0.0, 1.5) * d["G0"]
    se = curve.discount(1.0, 1.5) * d["std_err"]
    assert abs(mean_t - p0 / curve.discount(0.0, 1.0)) <= 3 * se
