import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rps_kinetic import game_mc as mc
from rps_kinetic.core import DensityField, Grid1D, ModelParams, mass

# abstract choices; c beats (c + 1) % 3
A, B, C = 0, 1, 2


@pytest.mark.parametrize("a, b, gain", [
    (A, A, 0), (A, B, 1), (A, C, -1),
    (B, A, -1), (B, B, 0), (B, C, 1),
    (C, A, 1), (C, B, -1), (C, C, 0),
])
def test_payoff_table(a, b, gain):
    out = mc.play_round(a, b, 0.5)
    assert out.delta_a == gain * 0.5
    assert out.delta_a + out.delta_b == 0


def test_each_choice_wins_loses_and_draws_once():
    for row in mc.PAYOFF_UNITS:
        assert sorted(row) == [-1, 0, 1]
    np.testing.assert_array_equal(mc.PAYOFF_UNITS, -mc.PAYOFF_UNITS.T)


def test_play_round_validates():
    with pytest.raises(ValueError):
        mc.play_round(3, 0, 1.0)
    with pytest.raises(ValueError):
        mc.play_round(0, 1, 0.0)


def test_from_wealths_roundtrip():
    w = np.array([0.0, 0.49, 0.5, 1.7, 3.0])
    pop = mc.AgentPopulation.from_wealths(w, 0.5)
    np.testing.assert_allclose(pop.wealths, w, atol=1e-15)
    assert np.all((pop.base >= 0) & (pop.base < 0.5))
    np.testing.assert_array_equal(pop.units, [0, 0, 1, 3, 6])


def test_sample_follows_density():
    g = Grid1D(0.0, 4.0, 8)
    f = DensityField.indicator(g, 1.0, 3.0, height=0.5)
    pop = mc.AgentPopulation.sample(40_000, f, 0.5, seed=3)
    assert pop.rho == pytest.approx(1.0)
    w = pop.wealths
    assert w.min() >= 1.0 and w.max() < 3.0
    assert abs(w.mean() - 2.0) < 0.02


def _pop(n=2000, seed=1, lo=0.0, hi=1.0, h=0.25):
    g = Grid1D(-20.0, 21.0, 164)
    return mc.AgentPopulation.sample(n, DensityField.indicator(g, lo, hi), h, seed), g


@pytest.mark.parametrize("constrained", [False, True])
def test_step_is_zero_sum_and_deterministic(constrained):
    pop, _ = _pop()
    p = ModelParams(3.0, 0.25, pop.rho, constrained)
    a = mc.step_population(pop, p, 0.02, 11)
    b = mc.step_population(pop, p, 0.02, 11)
    np.testing.assert_array_equal(a.units, b.units)
    assert a.total_units == pop.total_units
    assert a.total_wealth() == pop.total_wealth()
    assert a.time == pytest.approx(0.02)
    c = mc.step_population(pop, p, 0.02, 12)
    assert not np.array_equal(a.units, c.units)


def test_step_rejects_large_steps():
    pop, _ = _pop()
    with pytest.raises(ValueError, match="thinning"):
        mc.step_population(pop, ModelParams(3.0, 0.25, 1.0), 0.1, 0)


def test_constrained_never_goes_negative():
    pop, _ = _pop(n=5000, lo=0.0, hi=1.0)
    p = ModelParams(3.0, 0.25, pop.rho, constrained=True)
    lows = []
    out = mc.simulate(pop, p, 0.02, [1.0, 3.0], seed=5,
                      check=lambda q: lows.append(q.wealths.min()))
    assert min(lows) >= 0.0
    assert out[-1].total_units == pop.total_units


def test_constrained_below_payoff_is_frozen():
    g = Grid1D(0.0, 2.0, 40)
    f = DensityField.indicator(g, 0.0, 0.4)
    pop = mc.AgentPopulation.sample(3000, f, 0.5, seed=9)
    p = ModelParams(3.0, 0.5, pop.rho, constrained=True)
    out = mc.simulate(pop, p, 0.02, [0.0, 1.0, 2.0], seed=1)
    h0 = mc.histogram(out[0], g).values
    for q in out[1:]:
        np.testing.assert_array_equal(mc.histogram(q, g).values, h0)


def test_participation_rate():
    # each agent plays at total rate eta * rho: half as initiator, half as opponent
    pop, _ = _pop(n=20_000)
    p = ModelParams(3.0, 0.25, pop.rho)
    dt = 0.01
    q = mc.step_population(pop, p, dt, 4)
    moved = np.count_nonzero(q.units != pop.units)
    # a game changes wealth with probability 2/3; overlaps are O(dt)
    expected = pop.n_agents * p.eta * p.rho * dt * 2 / 3
    assert abs(moved - expected) < 5 * math.sqrt(expected) + 0.05 * expected


def test_simulate_lands_on_output_times():
    pop, _ = _pop()
    p = ModelParams(3.0, 0.25, pop.rho)
    out = mc.simulate(pop, p, 0.03, [0.0, 0.1, 0.25], seed=2)
    assert [q.time for q in out] == [0.0, 0.1, 0.25]


def test_histogram_mass_and_coverage():
    pop, g = _pop()
    hist = mc.histogram(pop, g)
    assert mass(hist) == pytest.approx(pop.rho, abs=1e-12)
    with pytest.raises(ValueError, match="not covered"):
        mc.histogram(pop, Grid1D(0.5, 1.0, 4))


@given(st.integers(0, 2**32), st.booleans())
@settings(max_examples=20, deadline=None)
def test_zero_sum_any_seed(seed, constrained):
    pop, _ = _pop(n=500, seed=seed % 1000)
    p = ModelParams(3.0, 0.25, pop.rho, constrained)
    q = mc.step_population(pop, p, 0.03, seed)
    assert q.total_units == pop.total_units
    assert math.fsum(q.base) == math.fsum(pop.base)
    if constrained:
        assert q.units.min() >= 0


def test_jump_rates_match_kinetic_rates():
    # every agent is a tagged agent; pool their +h and -h jumps over ~1e5 events
    pop, _ = _pop(n=100_000, seed=21)
    p = ModelParams(3.0, 0.25, pop.rho)
    dt, steps = 1e-3, 520
    up = down = 0
    for s in range(steps):
        q = mc.step_population(pop, p, dt, mc.step_seed(99, s))
        d = q.units - pop.units
        up += int(np.count_nonzero(d == 1))
        down += int(np.count_nonzero(d == -1))
        pop = q
    exposure = pop.n_agents * steps * dt
    expected = p.eta * p.rho / 3 * exposure
    se = math.sqrt(expected)
    assert up + down > 1e5
    assert abs(up - expected) < 3 * se
    assert abs(down - expected) < 3 * se
