import math

import numpy as np
import pytest
from scipy import integrate, special

from rps_kinetic import limit_models as lm
from rps_kinetic.core import DensityField, Grid1D, StabilityError, l1_distance, mass


@pytest.fixture(scope="module")
def half():
    g = Grid1D(0.0, 12.0, 480)
    return DensityField.indicator(g, 1.0, 2.0)


def test_heat_of_box_matches_erf_formula():
    g = Grid1D(-8.0, 9.0, 170)
    f = DensityField.indicator(g, 0.0, 1.0)
    D, t = 1.0, 0.5
    u = lm.solve_heat(f, D, t)
    s = math.sqrt(4 * D * t)

    def point(x):
        return 0.5 * (special.erf(x / s) - special.erf((x - 1) / s))

    ref = DensityField.from_function(g, point, order=12)
    assert np.max(np.abs(u.values - ref.values)) < 1e-12
    assert u.time == t


def test_heat_zero_time_is_identity():
    g = Grid1D(0, 1, 10)
    f = DensityField.gaussian(g, 0.5, 0.1)
    np.testing.assert_array_equal(lm.solve_heat(f, 2.0, 0.0).values, f.values)


def test_heat_semigroup():
    g = Grid1D(-10, 10, 400)
    f = DensityField.indicator(g, -1, 1)
    a = lm.solve_heat(lm.solve_heat(f, 1.0, 0.3), 1.0, 0.2)
    b = lm.solve_heat(f, 1.0, 0.5)
    # composing cell averages is exact only in the limit; the defect is O(dx^2)
    assert l1_distance(a, b) < 5e-4


def test_cell_kernel_sums_to_one():
    k = lm.cell_heat_kernel(0.1, 0.3, 200)
    assert math.fsum(k) == pytest.approx(1.0, abs=1e-13)
    np.testing.assert_allclose(k, k[::-1], atol=1e-16)


@pytest.mark.parametrize("tau", [0.05, 0.25, 1.0, 4.0])
def test_half_line_mass_against_quadrature(half, tau):
    ref, _ = integrate.quad(lambda y: special.erf(y / (2 * math.sqrt(tau))), 1.0, 2.0,
                            epsabs=1e-15)
    assert lm.half_line_mass(half, tau) == pytest.approx(ref, abs=1e-13)


def test_half_line_mass_frozen(half):
    assert lm.half_line_mass(half, 0.25) == pytest.approx(0.9507234810549394, rel=1e-13)
    assert lm.half_line_mass(half, 1.0) == pytest.approx(0.701226626571533, rel=1e-13)


def test_image_solution_mass_matches_erf_mass(half):
    for tau in (0.1, 1.0):
        u = lm.solve_half_line_heat(half, tau)
        assert mass(u) == pytest.approx(lm.half_line_mass(half, tau), abs=1e-10)
        assert u.values.min() >= -1e-15


def test_oracle_frozen_time_change(half):
    r = lm.reparametrized_oracle(half, 3.0, 1.0, [0.5, 1.0])
    np.testing.assert_allclose(r.internal_time_series, [0.0, 0.47279295939955157,
                                                        0.8684996831603974], rtol=1e-9)
    np.testing.assert_allclose(r.mass_series, [1.0, 0.8606974537561269, 0.7336737528928099],
                               rtol=1e-9)


def test_oracle_time_change_satisfies_ode(half):
    # d tau / dt = (eta/3) M(tau)
    eta = 3.0
    times = np.array([0.4, 0.4 + 1e-4])
    r = lm.reparametrized_oracle(half, eta, times[-1], times)
    rate = np.diff(r.internal_time_series[1:])[0] / 1e-4
    mid = lm.half_line_mass(half, r.internal_time_series[1:].mean())
    assert rate == pytest.approx(eta / 3 * mid, rel=1e-6)


def test_unreachable_time_reported():
    g = Grid1D(0.0, 4.0, 40)
    f = DensityField.indicator(g, 0.0, 0.1)
    with pytest.raises(lm.UnreachableTimeError) as info:
        lm.reparametrized_oracle(f, 3.0, 1e6, tau_max=10.0)
    assert info.value.reachable < 1e6


def test_nonlocal_fd_stability_bound(half):
    bound = lm.nonlocal_max_stable_dt(half.grid.dx, 3.0, 1.0)
    with pytest.raises(StabilityError):
        lm.solve_nonlocal_diffusion(half, 3.0, 0.1, 2 * bound)


def test_nonlocal_fd_against_oracle_coarse(half):
    dt = lm.nonlocal_max_stable_dt(half.grid.dx, 3.0, 1.0)
    fd = lm.solve_nonlocal_diffusion(half, 3.0, 0.5, dt, [0.25, 0.5])
    ref = lm.reparametrized_oracle(half, 3.0, 0.5, [0.25, 0.5])
    assert l1_distance(fd.trajectory.final, ref.trajectory.final) < 2e-4
    assert fd.internal_time_series[-1] == pytest.approx(ref.internal_time_series[-1], rel=1e-3)
    assert np.all(np.diff(fd.mass_series) <= 0)


def test_weak_residual_requires_vanishing_final_value(half):
    r = lm.reparametrized_oracle(half, 3.0, 1.0, np.linspace(0, 1, 5))
    bad = lm.WeakTestFunction(lambda t, x: x, lambda t, x: 0 * x, lambda t, x: 0 * x, 1.0)
    with pytest.raises(ValueError, match="vanish"):
        lm.weak_form_residual(r, 3.0, bad, half)


def test_test_function_derivatives_by_finite_differences():
    tf = lm.poly_exp_test_function(2.0, power=3, rate=0.7, time_power=2)
    x = np.linspace(0.1, 5, 7)
    t, d = 0.6, 1e-4
    dt_fd = (tf.phi(t + d, x) - tf.phi(t - d, x)) / (2 * d)
    dxx_fd = (tf.phi(t, x + d) - 2 * tf.phi(t, x) + tf.phi(t, x - d)) / d**2
    np.testing.assert_allclose(tf.dphi_dt(t, x), dt_fd, rtol=1e-6)
    np.testing.assert_allclose(tf.d2phi_dx2(t, x), dxx_fd, rtol=1e-5, atol=1e-7)
    assert len(lm.weak_test_functions(1.0)) == 4
