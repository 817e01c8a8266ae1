"""The unconstrained game on the whole line.

The density obeys the linear lattice equation

    df/dt = (eta * rho / 3) * (f(x + h) + f(x - h) - 2 f(x)),

a continuous-time random walk with jump rate eta*rho/3 in each direction.
Besides the RK4 solver this module provides two closed-form routes to the same
solution: the lattice fundamental solution (Poisson-binomial double sum and the
equivalent modified-Bessel form) and the Fourier multiplier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special, stats

from .core import (
    DensityField,
    ModelParams,
    StabilityError,
    Trajectory,
    integrate_rk4,
    shift,
)

__all__ = [
    "LatticeMeasure",
    "SpectralField",
    "EnergyDecayReport",
    "jump_rate",
    "max_stable_dt",
    "rhs_unconstrained",
    "solve_unconstrained",
    "fundamental_solution",
    "poisson_binomial_weights",
    "bessel_weights",
    "convolution_solution",
    "to_spectral",
    "spectral_solve",
    "energy_decay_fit",
]

# truncation level for the Poisson series of the fundamental solution
POISSON_TAIL = 1e-14


def jump_rate(params: ModelParams) -> float:
    """Total jump rate lambda = 2*rho*eta/3 of the underlying random walk."""
    return 2.0 * params.rho * params.eta / 3.0


def max_stable_dt(params: ModelParams) -> float:
    """Half the RK4 stability limit for an operator of norm 4*eta*rho/3."""
    return 0.5 * 3.0 / (4.0 * params.eta * params.rho)


def _check_dt(dt: float, params: ModelParams) -> None:
    bound = max_stable_dt(params)
    if not 0 < dt <= bound * (1 + 1e-12):
        raise StabilityError(f"dt={dt!r} exceeds the stability bound {bound!r} = 3/(8*eta*rho)")


def _stencil(values: np.ndarray, k: int, coef: float) -> np.ndarray:
    return coef * (shift(values, k) + shift(values, -k) - 2.0 * values)


def rhs_unconstrained(field: DensityField, params: ModelParams) -> DensityField:
    k = field.grid.cells_per(params.h)
    coef = params.eta * params.rho / 3.0
    return field.with_values(_stencil(field.values, k, coef))


def solve_unconstrained(f_in: DensityField, params: ModelParams, t_end: float, dt: float,
                        output_times: Sequence[float] | None = None) -> Trajectory:
    """RK4 integration of the lattice equation; values outside the grid count as 0."""
    k = f_in.grid.cells_per(params.h)
    _check_dt(dt, params)
    times = _output_times(f_in.time, t_end, output_times)
    coef = params.eta * params.rho / 3.0
    values = integrate_rk4(lambda y: _stencil(y, k, coef), f_in.values, times, dt)
    return Trajectory(f_in.grid, times, values)


def _output_times(t0: float, t_end: float, output_times: Sequence[float] | None) -> np.ndarray:
    if t_end < t0:
        raise ValueError("t_end precedes the initial time")
    if output_times is None:
        return np.array([t0, t_end])
    times = np.asarray(sorted(set(float(t) for t in output_times) | {t0}), dtype=float)
    if times[0] < t0 or times[-1] > t_end * (1 + 1e-12):
        raise ValueError("output times must lie in [t0, t_end]")
    return times


@dataclass(frozen=True)
class LatticeMeasure:
    """Dirac comb ``sum_j weights[j] * delta(x - offsets[j] * spacing)``."""

    spacing: float
    offsets: np.ndarray
    weights: np.ndarray
    time: float

    def weight(self, j: int) -> float:
        idx = j + self.j_max
        if 0 <= idx < self.weights.size:
            return float(self.weights[idx])
        return 0.0

    @property
    def j_max(self) -> int:
        return int(self.offsets[-1])

    @property
    def total(self) -> float:
        return float(math.fsum(self.weights))

    def to_field(self, grid, center_cell: int) -> DensityField:
        """Deposit each atom in the cell ``center_cell + j*k`` as a cell density."""
        k = grid.cells_per(self.spacing)
        values = np.zeros(grid.n_cells)
        idx = center_cell + self.offsets * k
        inside = (idx >= 0) & (idx < grid.n_cells)
        values[idx[inside]] = self.weights[inside] / grid.dx
        return DensityField(grid, values, self.time)


def _poisson_cutoff(mean: float) -> int:
    """Smallest K with P(Poisson(mean) > K) < POISSON_TAIL."""
    if mean == 0:
        return 0
    k = int(mean + 10 * math.sqrt(mean) + 20)
    while stats.poisson.sf(k, mean) >= POISSON_TAIL:
        k *= 2
    lo, hi = 0, k
    while lo < hi:
        mid = (lo + hi) // 2
        if stats.poisson.sf(mid, mean) < POISSON_TAIL:
            hi = mid
        else:
            lo = mid + 1
    return lo


def poisson_binomial_weights(lam_t: float, j_max: int) -> np.ndarray:
    """Weights on offsets -j_max..j_max from the Poisson-binomial double sum.

    A Poisson number k of jumps, each +1 or -1 with probability 1/2, lands on
    offset 2i - k with probability C(k, i)/2**k. The sum is truncated at the
    Poisson quantile where the remaining tail is below ``POISSON_TAIL``.
    """
    k_cut = _poisson_cutoff(lam_t)
    w = np.zeros(2 * j_max + 1)
    for k in range(k_cut + 1):
        if lam_t == 0:
            p_k = 1.0 if k == 0 else 0.0
        else:
            p_k = math.exp(-lam_t + k * math.log(lam_t) - math.lgamma(k + 1))
        if p_k == 0.0:
            continue
        i = np.arange(k + 1)
        log_binom = (math.lgamma(k + 1) - special.gammaln(i + 1) - special.gammaln(k - i + 1)
                     - k * math.log(2.0))
        j = 2 * i - k
        keep = np.abs(j) <= j_max
        np.add.at(w, j[keep] + j_max, p_k * np.exp(log_binom[keep]))
    return w


def bessel_weights(lam_t: float, j_max: int) -> np.ndarray:
    """Weights ``exp(-lam_t) * I_j(lam_t)`` on offsets -j_max..j_max."""
    j = np.abs(np.arange(-j_max, j_max + 1))
    return special.ive(j, lam_t)


def fundamental_solution(t: float, params: ModelParams, j_max: int | None = None,
                         method: str = "bessel") -> LatticeMeasure:
    """Lattice fundamental solution at time ``t`` with jump rate 2*rho*eta/3.

    ``method`` selects the evaluation: ``"bessel"`` or ``"poisson"`` (the
    Poisson-binomial double sum). ``j_max`` defaults to the Poisson cutoff.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    lam_t = jump_rate(params) * t
    cutoff = _poisson_cutoff(lam_t)
    if j_max is None:
        j_max = cutoff
    elif j_max < cutoff and stats.poisson.sf(j_max, lam_t) >= POISSON_TAIL:
        raise ValueError(
            f"j_max={j_max} too small: tail weight bound {stats.poisson.sf(j_max, lam_t):.3e} "
            f">= {POISSON_TAIL:g} (need j_max >= {cutoff})"
        )
    if method == "bessel":
        w = bessel_weights(lam_t, j_max)
    elif method == "poisson":
        w = poisson_binomial_weights(lam_t, j_max)
    else:
        raise ValueError(f"unknown method {method!r}")
    w = w / math.fsum(w)
    offsets = np.arange(-j_max, j_max + 1)
    return LatticeMeasure(params.h, offsets, w, float(t))


def convolution_solution(f_in: DensityField, t: float, params: ModelParams) -> DensityField:
    """Solution as the lattice convolution ``F(t) * f_in`` (truncated to the grid)."""
    k = f_in.grid.cells_per(params.h)
    F = fundamental_solution(t, params)
    values = np.zeros(f_in.grid.n_cells)
    for j, w in zip(F.offsets, F.weights):
        if abs(j * k) < f_in.grid.n_cells and w > 0:
            values += w * shift(f_in.values, -j * k)
    return DensityField(f_in.grid, values, f_in.time + t)


@dataclass(frozen=True)
class SpectralField:
    """Discrete Fourier amplitudes scaled so that the zero mode is the mass."""

    frequencies: np.ndarray
    amplitudes: np.ndarray
    time: float


def to_spectral(field: DensityField) -> SpectralField:
    xi = 2.0 * np.pi * np.fft.fftfreq(field.grid.n_cells, d=field.grid.dx)
    amps = field.grid.dx * np.fft.fft(field.values)
    return SpectralField(xi, amps, field.time)


def fourier_multiplier(xi: np.ndarray, t: float, params: ModelParams) -> np.ndarray:
    return np.exp(jump_rate(params) * t * (np.cos(params.h * xi) - 1.0))


def spectral_solve(f_in: DensityField, t: float, params: ModelParams) -> DensityField:
    """Exact solution on the periodically extended grid via the Fourier multiplier."""
    f_in.grid.cells_per(params.h)
    n = f_in.grid.n_cells
    xi = 2.0 * np.pi * np.fft.rfftfreq(n, d=f_in.grid.dx)
    spec = np.fft.rfft(f_in.values) * fourier_multiplier(xi, t, params)
    return f_in.with_values(np.fft.irfft(spec, n=n), f_in.time + t)


@dataclass(frozen=True)
class EnergyDecayReport:
    times: np.ndarray
    energies: np.ndarray
    fitted_slope: float
    fit_window: tuple[float, float]
    slope_stderr: float
    monotone: bool
    max_relative_increase: float


def energy_decay_fit(trajectory: Trajectory, window: tuple[float, float] | None = None,
                     rtol: float = 1e-12) -> EnergyDecayReport:
    """Least-squares slope of log E against log t over ``window``.

    The window defaults to the last decade of the run and must span at least one
    decade. ``monotone`` is False if the energy ever grows by more than ``rtol``
    relative to the previous sample.
    """
    times = trajectory.times
    energies = trajectory.energies()
    if window is None:
        window = (times[-1] / 10.0, times[-1])
    t_lo, t_hi = window
    if not (t_lo > 0 and t_hi / t_lo >= 10.0 * (1 - 1e-9)):
        raise ValueError(f"fit window {window} must span at least one decade with t_lo > 0")
    sel = (times >= t_lo * (1 - 1e-12)) & (times <= t_hi * (1 + 1e-12))
    if sel.sum() < 3:
        raise ValueError("fewer than 3 samples inside the fit window")
    fit = stats.linregress(np.log(times[sel]), np.log(energies[sel]))
    growth = np.diff(energies) / np.maximum(energies[:-1], np.finfo(float).tiny)
    max_inc = float(max(growth.max(initial=0.0), 0.0))
    return EnergyDecayReport(
        times=times,
        energies=energies,
        fitted_slope=float(fit.slope),
        fit_window=(float(t_lo), float(t_hi)),
        slope_stderr=float(fit.stderr),
        monotone=bool(max_inc <= rtol),
        max_relative_increase=max_inc,
    )
