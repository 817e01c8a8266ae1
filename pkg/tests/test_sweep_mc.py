import numpy as np
import pytest

from rps_kinetic.core import GridMismatchError, Trajectory
from rps_kinetic.harness.config import ConfigError, parse_config
from rps_kinetic.harness.mc import mc_compare, pde_reference_for, statistical_tolerance
from rps_kinetic.harness.sweep import _reduce, epsilon_sweep, sweep_config

SWEEP = """\
model = unconstrained
eta = 3
x_min = -10
x_max = 11
n_cells = 84
t_end = 1
initial = indicator(0, 1)
eps_list = 0.5, 0.25, 0.125
"""

MC = """\
model = monte_carlo
mc_kinetic = unconstrained
eta = 3
h = 0.5
x_min = -10
x_max = 11
n_cells = 420
t_end = 1
n_outputs = 2
initial = indicator(0, 1)
n_agents = 20000
n_seeds = 3
"""


def test_sweep_config_snaps_domain_outward():
    base = parse_config(SWEEP.replace("x_max = 11", "x_max = 10.9"))
    c = sweep_config(base, 0.4)
    assert (c.x_min, c.x_max) == (pytest.approx(-10.0), pytest.approx(11.2))
    assert c.grid.cells_per(0.4) == 2
    assert c.scaling == "diffusive" and c.h == 0.4


def test_unconstrained_sweep_is_second_order_on_eps_cells():
    r = epsilon_sweep(parse_config(SWEEP))
    assert r.monotone and not r.diagnostics
    assert r.fitted_order > 1.8
    assert all(e > 0 for e in r.errors)
    # the pointwise error of a staircase only improves at first order
    strong = np.array(r.strong_errors)
    assert 0.7 < np.log2(strong[1] / strong[2]) < 1.3


def test_constrained_sweep_reports_concentration():
    text = (SWEEP.replace("model = unconstrained", "model = constrained")
            .replace("x_min = -10", "x_min = 0").replace("x_max = 11", "x_max = 12")
            .replace("n_cells = 84", "n_cells = 48").replace("indicator(0, 1)", "indicator(1, 2)"))
    r = epsilon_sweep(parse_config(text), jobs=2)
    assert r.monotone
    assert r.limit_minus_mass == pytest.approx(1 - 0.7336737528928099, rel=1e-6)
    assert np.all(np.diff(r.minus_mass_gap) < 0)


def test_non_monotone_sweep_is_flagged_not_fatal():
    base = parse_config(SWEEP)
    entries = [{"eps": e, "error": err, "strong_error": err, "invariants_ok": True}
               for e, err in ((0.4, 1e-2), (0.2, 2e-2), (0.1, 1e-3))]
    r = _reduce(base, entries)
    assert not r.monotone
    assert any("not strictly decreasing" in d for d in r.diagnostics)
    assert r.fit_residual > 0


def test_sweep_rejects_bad_input():
    base = parse_config(SWEEP)
    with pytest.raises(ConfigError):
        epsilon_sweep(base, [0.5])
    with pytest.raises(ConfigError):
        epsilon_sweep(base.with_changes(model="heat"), [0.5, 0.25])


def test_mc_compare_within_tolerance():
    c = parse_config(MC)
    r = mc_compare(c)
    assert r.tolerance == pytest.approx(statistical_tolerance(420, 0.05, 20000))
    assert r.distances.shape == (3, 2)
    assert r.within_tolerance


def test_mc_compare_param_mismatch():
    c = parse_config(MC)
    ref = pde_reference_for(c)
    other = Trajectory(parse_config(MC.replace("n_cells = 420", "n_cells = 210")).grid,
                       ref.times, ref.values[:, ::2])
    with pytest.raises(GridMismatchError):
        mc_compare(c, other)
    with pytest.raises(ValueError, match="output times"):
        mc_compare(c, Trajectory(ref.grid, ref.times[:1], ref.values[:1]))
    with pytest.raises(ConfigError):
        mc_compare(c.with_changes(model="unconstrained"), ref)


def test_constrained_frozen_population_matches_pde():
    text = (MC.replace("mc_kinetic = unconstrained", "mc_kinetic = constrained")
            .replace("x_min = -10", "x_min = 0").replace("x_max = 11", "x_max = 2")
            .replace("n_cells = 420", "n_cells = 40").replace("indicator(0, 1)", "indicator(0, 0.4)"))
    r = mc_compare(parse_config(text))
    # nobody can afford a stake: the histogram never changes
    np.testing.assert_allclose(r.distances[:, 0], r.distances[:, 1], rtol=0, atol=0)


@pytest.mark.slow
def test_doubling_agents_shrinks_distance_by_sqrt2():
    c = parse_config(MC.replace("n_seeds = 3", "n_seeds = 10").replace("n_agents = 20000",
                                                                       "n_agents = 100000"))
    ref = pde_reference_for(c)
    d1 = mc_compare(c, ref).distances[:, -1].mean()
    d2 = mc_compare(c.with_changes(n_agents=200_000), ref).distances[:, -1].mean()
    assert 1.2 < d1 / d2 < 1.65
