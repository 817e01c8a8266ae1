"""Diffusion limits of the two kinetic models.

Whole line: the heat equation with diffusivity (eta/3)*rho, solved exactly on
cell averages.

Half line: the nonlocal problem

    df/dt = (eta/3) * M(t) * d2f/dx2,   f(t, 0) = 0,   M(t) = int f dx,

solved two independent ways. ``solve_nonlocal_diffusion`` uses finite
differences and RK4. ``reparametrized_oracle`` changes time to tau with
d(tau)/dt = (eta/3) M, which turns the problem into the linear absorbing heat
equation solved by the method of images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit
from scipy import integrate, optimize, special

from .core import DensityField, Grid1D, StabilityError, Trajectory, mass

__all__ = [
    "LimitRunReport",
    "UnreachableTimeError",
    "WeakTestFunction",
    "cell_heat_kernel",
    "solve_heat",
    "solve_half_line_heat",
    "half_line_mass",
    "nonlocal_max_stable_dt",
    "solve_nonlocal_diffusion",
    "reparametrized_oracle",
    "weak_form_residual",
    "poly_exp_test_function",
    "weak_test_functions",
]

_SQRT_PI = math.sqrt(math.pi)


class UnreachableTimeError(ValueError):
    def __init__(self, t_end: float, reachable: float):
        super().__init__(
            f"t_end={t_end!r} is beyond the reachable horizon {reachable!r} of the time change"
        )
        self.t_end = t_end
        self.reachable = reachable


@dataclass(frozen=True)
class LimitRunReport:
    trajectory: Trajectory
    mass_series: np.ndarray
    internal_time_series: np.ndarray | None = None
    info: dict = field(default_factory=dict)


def _second_antiderivative_decay(z: np.ndarray, s: float) -> np.ndarray:
    """H(z) - max(z, 0), where H'' is the normal pdf of standard deviation ``s``.

    H(z) = z Phi(z/s) + s phi(z/s). Removing the linear asymptote analytically
    avoids the cancellation of large nearly-linear values in second differences.
    """
    u = np.abs(z) / s
    return s * np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi) - np.abs(z) * special.ndtr(-u)


def cell_heat_kernel(dx: float, variance: float, n: int) -> np.ndarray:
    """Cell-to-cell transfer weights for offsets -(n-1)..(n-1).

    Entry ``m`` is the average over a target cell of the heat kernel applied to
    a unit cell average located ``m`` cells away. ``variance`` is 2*D*t.
    """
    m = np.arange(-(n - 1), n)
    delta = (m == 0).astype(float)
    if variance <= 0:
        return delta
    s = math.sqrt(variance)
    z = m * dx
    G = _second_antiderivative_decay
    # the second difference of max(z, 0) on the lattice is dx at m = 0 only
    return delta + (G(z + dx, s) - 2.0 * G(z, s) + G(z - dx, s)) / dx


def solve_heat(f_in: DensityField, diffusivity: float, t_end: float) -> DensityField:
    """Heat flow of the piecewise-constant ``f_in`` on the whole line, as cell averages.

    Exact up to round-off: each input cell is convolved with the Gaussian of
    variance 2*diffusivity*t_end and averaged over every output cell. Mass that
    leaves the grid is lost.
    """
    if diffusivity < 0:
        raise ValueError("diffusivity must be non-negative")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    variance = 2.0 * diffusivity * t_end
    if variance == 0:
        return f_in.with_values(f_in.values, f_in.time + t_end)
    n = f_in.grid.n_cells
    kernel = cell_heat_kernel(f_in.grid.dx, variance, n)
    out = np.convolve(f_in.values, kernel, mode="full")[n - 1: 2 * n - 1]
    return f_in.with_values(out, f_in.time + t_end)


def _check_half_line(grid: Grid1D) -> None:
    if abs(grid.x_min) > 1e-12 * grid.dx:
        raise ValueError(f"half-line problems need a grid starting at 0, got x_min={grid.x_min}")


def solve_half_line_heat(f_in: DensityField, tau: float) -> DensityField:
    """du/dtau = d2u/dx2 on x > 0 with u(0) = 0, by odd reflection, as cell averages."""
    _check_half_line(f_in.grid)
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if tau == 0:
        return f_in
    n = f_in.grid.n_cells
    c = f_in.values
    kernel = cell_heat_kernel(f_in.grid.dx, 2.0 * tau, 2 * n)
    direct = np.convolve(c, kernel[n:3 * n - 1], mode="full")[n - 1: 2 * n - 1]
    # image of cell j sits at cell -(j + 1), i.e. i + j + 1 cells from target i
    image = np.convolve(c[::-1], kernel, mode="full")[3 * n - 1: 4 * n - 1]
    return f_in.with_values(direct - image)


def _erf_antiderivative(y: np.ndarray, s: float) -> np.ndarray:
    return y * special.erf(y / s) + s / _SQRT_PI * np.exp(-(y / s) ** 2)


def half_line_mass(f_in: DensityField, tau: float) -> float:
    """Mass left at internal time ``tau`` by the absorbing heat flow of ``f_in``.

    A unit mass started at y survives with probability erf(y / (2 sqrt(tau))).
    """
    _check_half_line(f_in.grid)
    if tau <= 0:
        return mass(f_in)
    s = 2.0 * math.sqrt(tau)
    e = f_in.grid.edges
    per_cell = _erf_antiderivative(e[1:], s) - _erf_antiderivative(e[:-1], s)
    return float(np.dot(f_in.values, per_cell))


def nonlocal_max_stable_dt(dx: float, eta: float, rho: float) -> float:
    return 0.5 * dx * dx * 3.0 / (2.0 * eta * rho)


@njit(cache=True)
def _nonlocal_rate(f, dx, coef, out):
    n = f.size
    m = 0.0
    for i in range(n):
        m += f[i]
    a = coef * m * dx / (dx * dx)
    # odd ghost -f[0] at the wall, zero beyond the far end
    out[0] = a * (f[1] - 3.0 * f[0])
    for i in range(1, n - 1):
        out[i] = a * (f[i + 1] - 2.0 * f[i] + f[i - 1])
    out[n - 1] = a * (f[n - 2] - 2.0 * f[n - 1])
    return coef * m * dx


@njit(cache=True)
def _nonlocal_rk4(f, tau, dx, coef, step, n_steps):
    n = f.size
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    for _ in range(n_steps):
        a1 = _nonlocal_rate(f, dx, coef, k1)
        for i in range(n):
            tmp[i] = f[i] + 0.5 * step * k1[i]
        a2 = _nonlocal_rate(tmp, dx, coef, k2)
        for i in range(n):
            tmp[i] = f[i] + 0.5 * step * k2[i]
        a3 = _nonlocal_rate(tmp, dx, coef, k3)
        for i in range(n):
            tmp[i] = f[i] + step * k3[i]
        a4 = _nonlocal_rate(tmp, dx, coef, k4)
        for i in range(n):
            f[i] = f[i] + (step / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        tau += (step / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return tau


def solve_nonlocal_diffusion(f_in: DensityField, eta: float, t_end: float, dt: float,
                             output_times: Sequence[float] | None = None) -> LimitRunReport:
    """Finite-difference solver for the mass-dependent diffusion on the half line.

    Second-order Laplacian with an odd ghost cell enforcing f(t, 0) = 0 at the
    left face of the first cell, coefficient (eta/3) * current mass, RK4 in
    time. The internal time tau is integrated alongside the density.
    """
    _check_half_line(f_in.grid)
    if np.any(f_in.values < 0):
        raise ValueError("initial density must be non-negative")
    rho = mass(f_in)
    dx = f_in.grid.dx
    if rho > 0:
        bound = nonlocal_max_stable_dt(dx, eta, rho)
        if not 0 < dt <= bound * (1 + 1e-12):
            raise StabilityError(f"dt={dt!r} exceeds the parabolic bound {bound!r}")
    elif not dt > 0:
        raise StabilityError("dt must be positive")
    times = _times(f_in.time, t_end, output_times)
    f = np.array(f_in.values, dtype=float)
    values = np.empty((times.size, f.size))
    taus = np.zeros(times.size)
    values[0] = f
    tau = 0.0
    for n in range(1, times.size):
        span = times[n] - times[n - 1]
        steps = int(math.ceil(span / dt * (1 - 1e-12))) if span > 0 else 0
        if steps:
            tau = _nonlocal_rk4(f, tau, dx, eta / 3.0, span / steps, steps)
            if not np.all(np.isfinite(f)):
                raise FloatingPointError(f"non-finite state before t={times[n]:.6g}")
        values[n] = f
        taus[n] = tau
    traj = Trajectory(f_in.grid, times, values)
    return LimitRunReport(traj, traj.masses(), taus, {"eta": eta, "dt": dt})


def _times(t0: float, t_end: float, output_times: Sequence[float] | None) -> np.ndarray:
    if t_end < t0:
        raise ValueError("t_end precedes the initial time")
    if output_times is None:
        return np.array([t0, t_end])
    return np.array(sorted(set(map(float, output_times)) | {t0}))


def reparametrized_oracle(f_in: DensityField, eta: float, t_end: float,
                          output_times: Sequence[float] | None = None,
                          tau_max: float = 1e8) -> LimitRunReport:
    """Semi-analytic solution of the half-line nonlocal problem.

    Physical time as a function of internal time is
    t(tau) = int_0^tau 3 / (eta * M(s)) ds with M from ``half_line_mass``;
    it is inverted by root finding at each requested time and the density is
    the image solution at that internal time.
    """
    _check_half_line(f_in.grid)
    times = _times(f_in.time, t_end, output_times)
    rho = mass(f_in)
    grid = f_in.grid
    if rho == 0:
        zeros = np.zeros((times.size, grid.n_cells))
        return LimitRunReport(Trajectory(grid, times, zeros), np.zeros(times.size),
                              np.zeros(times.size))

    def mass_at(tau: float) -> float:
        return half_line_mass(f_in, tau)

    # substituting tau = u**2 removes the sqrt(tau) behaviour of M near 0
    def elapsed_between(u_a: float, u_b: float) -> float:
        if u_b <= u_a:
            return 0.0
        val, _ = integrate.quad(lambda u: 6.0 * u / (eta * mass_at(u * u)), u_a, u_b,
                                epsabs=0.0, epsrel=1e-13, limit=200)
        return val

    u_max = math.sqrt(tau_max)
    taus = np.zeros(times.size)
    elapsed = times - f_in.time
    u_prev, t_prev = 0.0, 0.0
    for n, t in enumerate(elapsed):
        if t <= t_prev:
            taus[n] = u_prev * u_prev
            continue
        # tau <= (eta/3) rho t because M <= rho
        u_hi = min(math.sqrt(eta * rho * t / 3.0) * (1 + 1e-9), u_max)
        if t_prev + elapsed_between(u_prev, u_hi) < t:
            reachable = t_prev + elapsed_between(u_prev, u_max)
            raise UnreachableTimeError(float(times[n]), float(reachable + f_in.time))
        u = optimize.brentq(lambda u: t_prev + elapsed_between(u_prev, u) - t, u_prev, u_hi,
                            xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        t_prev, u_prev = t, u
        taus[n] = u * u
    values = np.stack([solve_half_line_heat(f_in, tau).values for tau in taus])
    masses = np.array([mass_at(tau) for tau in taus])
    traj = Trajectory(grid, times, values)
    return LimitRunReport(traj, masses, taus, {"eta": eta})


@dataclass(frozen=True)
class WeakTestFunction:
    """Space-time test function with the derivatives a weak residual needs."""

    phi: Callable[[float, np.ndarray], np.ndarray]
    dphi_dt: Callable[[float, np.ndarray], np.ndarray]
    d2phi_dx2: Callable[[float, np.ndarray], np.ndarray]
    T: float
    name: str = ""


def poly_exp_test_function(T: float, power: int = 2, rate: float = 1.0,
                           time_power: int = 1) -> WeakTestFunction:
    """phi(t, x) = (T - t)**time_power * x**power * exp(-rate * x)."""
    p, r, q = power, rate, time_power

    def space(x):
        return x**p * np.exp(-r * x)

    def space_xx(x):
        lower = p * (p - 1) * x ** (p - 2) if p >= 2 else 0.0
        middle = 2 * p * r * x ** (p - 1) if p >= 1 else 0.0
        return (lower - middle + r * r * x**p) * np.exp(-r * x)

    return WeakTestFunction(
        phi=lambda t, x: (T - t) ** q * space(x),
        dphi_dt=lambda t, x: -q * (T - t) ** (q - 1) * space(x),
        d2phi_dx2=lambda t, x: (T - t) ** q * space_xx(x),
        T=T,
        name=f"(T-t)^{q} x^{p} exp(-{r:g} x)",
    )


def weak_test_functions(T: float) -> list[WeakTestFunction]:
    return [
        poly_exp_test_function(T, 2, 1.0, 1),
        poly_exp_test_function(T, 3, 1.0, 1),
        poly_exp_test_function(T, 2, 0.5, 2),
        poly_exp_test_function(T, 4, 2.0, 1),
    ]


def weak_form_residual(report: LimitRunReport, eta: float, test_fn: WeakTestFunction,
                       f_in: DensityField) -> float:
    """Sum of the three terms of the very weak formulation over the sampled run.

    Midpoint rule in x, trapezoid rule in t. The trajectory must start at t = 0
    and end at the test function's final time T, where phi has to vanish.
    """
    traj = report.trajectory
    x = traj.grid.centers
    dx = traj.grid.dx
    T = test_fn.T
    if abs(traj.times[-1] - T) > 1e-12 * max(1.0, T) or traj.times[0] != 0.0:
        raise ValueError("trajectory must span [0, T] of the test function")
    if np.max(np.abs(test_fn.phi(T, x))) > 1e-12:
        raise ValueError("test function does not vanish at t = T")
    dphi = np.stack([test_fn.dphi_dt(t, x) for t in traj.times])
    lap = np.stack([test_fn.d2phi_dx2(t, x) for t in traj.times])
    masses = traj.values.sum(axis=1) * dx
    term_t = np.sum(traj.values * dphi, axis=1) * dx
    term_x = masses * np.sum(traj.values * lap, axis=1) * dx
    time_part = integrate.trapezoid(term_t + (eta / 3.0) * term_x, traj.times)
    initial = float(np.dot(f_in.values, test_fn.phi(0.0, x)) * dx)
    return float(time_part + initial)
