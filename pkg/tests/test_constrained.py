import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rps_kinetic import constrained as cm
from rps_kinetic.core import DensityField, Grid1D, ModelParams, StabilityError, mass

P = ModelParams(3.0, 0.25, 1.0, constrained=True)


@pytest.fixture
def start(half_grid):
    return DensityField.indicator(half_grid, 0.0, 1.0)


def test_needs_half_line():
    f = DensityField.indicator(Grid1D(-1, 4, 40), 0, 1)
    with pytest.raises(ValueError, match="x_min"):
        cm.rhs_constrained(f, P)


def test_stability_and_contraction_horizon(start):
    assert cm.contraction_horizon(P) == pytest.approx(3 / 24)
    with pytest.raises(StabilityError):
        cm.solve_constrained(start, P, 1.0, 1.0)


def test_rejects_negative_initial_data(half_grid):
    f = DensityField(half_grid, -np.ones(half_grid.n_cells))
    with pytest.raises(ValueError):
        cm.solve_constrained(f, P, 1.0, 0.1)


def test_all_wealth_below_payoff_is_frozen(half_grid):
    f = DensityField.indicator(half_grid, 0.0, 0.2)
    traj = cm.solve_constrained(f, P, 5.0, 0.1, output_times=[1, 5])
    np.testing.assert_array_equal(traj.values[-1], f.values)


def test_rhs_conserves_mass_and_first_moment(start):
    r = cm.rhs_constrained(start, P)
    assert mass(r) == pytest.approx(0.0, abs=1e-14)
    assert np.dot(r.values, r.grid.centers) * r.grid.dx == pytest.approx(0.0, abs=1e-14)


def test_tail_masses(start):
    tm = cm.tail_masses(start, 0.25, k_max=5)
    np.testing.assert_allclose(tm.betas, [1.0, 0.75, 0.5, 0.25, 0.0, 0.0], atol=1e-14)
    assert tm.beta == pytest.approx(0.75)


def test_split_field(start):
    s = cm.split_field(start, 0.25)
    assert s.f_minus_mass == pytest.approx(0.25)
    assert mass(s.f_plus) == pytest.approx(0.75)
    assert cm.concentration_mass(start, 0.5) == pytest.approx(0.5)


def test_beta_lower_bound_formula():
    assert cm.beta_lower_bound(0.75, 3.0, 0.0) == 0.75
    assert cm.beta_lower_bound(0.75, 3.0, 4.0) == pytest.approx(0.75 / 4.0)


def test_beta_rate_identity(start):
    traj = cm.solve_constrained(start, P, 2.0, 1e-3, output_times=np.linspace(0, 2, 201))
    numeric, exact = cm.beta_rates(traj, P)
    assert np.all(exact <= 0)
    assert cm.beta_derivative_check(traj, P) < 1e-4


def test_reference_beta_ratio_frozen():
    # frozen regression value of beta(50)/beta(0) for 1_[0,1), eta = 3, h = 0.25
    g = Grid1D(0.0, 20.0, 160)
    traj = cm.solve_constrained(DensityField.indicator(g, 0, 1), P, 50.0, 0.1, output_times=[50])
    b = cm.tail_mass_series(traj, 0.25)
    assert b[-1] / b[0] == pytest.approx(0.28189350817314635, rel=1e-9)


@given(arrays(np.float64, 48, elements=st.floats(0, 5, allow_nan=False)))
@settings(max_examples=25, deadline=None)
def test_positivity_mass_and_tail_bound(a):
    g = Grid1D(0.0, 12.0, 48)
    f = DensityField(g, a)
    if mass(f) == 0:
        return
    p = ModelParams(3.0, 0.5, mass(f), constrained=True)
    traj = cm.solve_constrained(f, p, 1.0, cm.max_stable_dt(p), output_times=[0.5, 1.0])
    assert traj.values.min() >= -1e-12
    # mass only leaves through the right end of the grid, never appears
    assert np.all(traj.masses() <= mass(f) + 1e-10)
    assert traj.values[:, 2:].max() <= a[2:].max() + 1e-10
    b = cm.tail_mass_series(traj, 0.5)
    assert np.all(np.diff(b) <= 1e-12)
