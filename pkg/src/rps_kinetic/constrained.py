"""The no-debt game on the half line.

Games only take place between two players who can both afford the stake, so
the interaction rate is proportional to the tail mass beta(t) of wealth above h:

    df/dt = (eta/3) * beta(t) * (1[x >= 2h] f(x - h) + f(x + h) - 1[x >= h] 2 f(x)).

Indicators are evaluated at cell centers; ``h`` and its multiples are cell
boundaries, so every cell is unambiguously on one side of each gate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    DensityField,
    Grid1D,
    ModelParams,
    StabilityError,
    Trajectory,
    integrate_rk4,
    mass,
)

__all__ = [
    "TailMasses",
    "SplitField",
    "max_stable_dt",
    "contraction_horizon",
    "rhs_constrained",
    "solve_constrained",
    "tail_masses",
    "tail_mass_series",
    "beta_lower_bound",
    "split_field",
    "beta_rates",
    "beta_derivative_check",
]

# below this tail mass no game can be played and the state is frozen
FROZEN_BETA = 1e-14


@dataclass(frozen=True)
class TailMasses:
    h: float
    betas: np.ndarray
    time: float

    @property
    def beta(self) -> float:
        return float(self.betas[1])


@dataclass(frozen=True)
class SplitField:
    """Part of a field above ``eps`` plus the mass sitting on ``[0, eps]``."""

    f_plus: DensityField
    f_minus_mass: float
    time: float


def max_stable_dt(params: ModelParams) -> float:
    """Same bound as the linear model with rho in place of beta (beta <= rho)."""
    return 0.5 * 3.0 / (4.0 * params.eta * params.rho)


def contraction_horizon(params: ModelParams) -> float:
    """Horizon 3/(8 eta rho) of the fixed-point existence argument (informational)."""
    return 3.0 / (8.0 * params.eta * params.rho)


def _check_half_line(grid: Grid1D) -> None:
    if abs(grid.x_min) > 1e-12 * grid.dx:
        raise ValueError(f"constrained model needs a grid starting at x=0, got x_min={grid.x_min}")


def _constrained_rate(values: np.ndarray, k: int, dx: float, coef: float) -> np.ndarray:
    beta = values[k:].sum() * dx
    out = np.zeros_like(values)
    if beta < FROZEN_BETA:
        return out
    n = values.size
    # winners at x >= 2h arrive from x - h
    out[2 * k:] += values[k: n - k]
    # losers above h land at x - h, for every x >= 0
    out[: n - k] += values[k:]
    out[k:] -= 2.0 * values[k:]
    return coef * beta * out


def rhs_constrained(field: DensityField, params: ModelParams) -> DensityField:
    _check_half_line(field.grid)
    k = field.grid.cells_per(params.h)
    return field.with_values(_constrained_rate(field.values, k, field.grid.dx, params.eta / 3.0))


def solve_constrained(f_in: DensityField, params: ModelParams, t_end: float, dt: float,
                      output_times: Sequence[float] | None = None) -> Trajectory:
    _check_half_line(f_in.grid)
    if np.any(f_in.values < 0):
        raise ValueError("constrained model needs a non-negative initial density")
    k = f_in.grid.cells_per(params.h)
    bound = max_stable_dt(params)
    if not 0 < dt <= bound * (1 + 1e-12):
        raise StabilityError(f"dt={dt!r} exceeds the stability bound {bound!r} = 3/(8*eta*rho)")
    if t_end < f_in.time:
        raise ValueError("t_end precedes the initial time")
    if output_times is None:
        times = np.array([f_in.time, t_end])
    else:
        times = np.array(sorted(set(map(float, output_times)) | {f_in.time}))
    dx = f_in.grid.dx
    coef = params.eta / 3.0
    values = integrate_rk4(lambda y: _constrained_rate(y, k, dx, coef), f_in.values, times, dt)
    return Trajectory(f_in.grid, times, values)


def tail_masses(field: DensityField, h: float, k_max: int | None = None) -> TailMasses:
    """``betas[k]`` is the mass of the cells whose center exceeds ``k*h``."""
    _check_half_line(field.grid)
    m = field.grid.cells_per(h)
    n = field.grid.n_cells
    if k_max is None:
        k_max = -(-n // m)
    tails = np.concatenate([np.cumsum(field.values[::-1])[::-1], [0.0]]) * field.grid.dx
    idx = np.minimum(np.arange(k_max + 1) * m, n)
    return TailMasses(float(h), tails[idx], field.time)


def tail_mass_series(trajectory: Trajectory, h: float, k: int = 1) -> np.ndarray:
    """``beta_k`` at every sample of ``trajectory``."""
    _check_half_line(trajectory.grid)
    m = trajectory.grid.cells_per(h)
    return trajectory.values[:, k * m:].sum(axis=1) * trajectory.grid.dx


def beta_lower_bound(beta0: float, eta: float, t: float) -> float:
    if beta0 < 0 or t < 0:
        raise ValueError("beta0 and t must be non-negative")
    return beta0 / (beta0 * eta * t / 3.0 + 1.0)


def split_field(field: DensityField, eps: float) -> SplitField:
    i = field.grid.boundary_index(eps)
    plus = field.values.copy()
    plus[:i] = 0.0
    minus_mass = float(field.values[:i].sum() * field.grid.dx)
    return SplitField(field.with_values(plus), minus_mass, field.time)


def beta_rates(trajectory: Trajectory, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Centered-difference d(beta)/dt and the closed-form rate at interior samples.

    The closed form is ``-(eta/3) * beta * (beta_1 - beta_2)``, the mass
    balance obtained by integrating the equation over ``[h, inf)``.
    """
    if len(trajectory) < 3:
        raise ValueError("need at least 3 samples for centered differencing")
    b1 = tail_mass_series(trajectory, params.h, 1)
    b2 = tail_mass_series(trajectory, params.h, 2)
    t = trajectory.times
    numeric = np.gradient(b1, t)[1:-1]
    exact = (-(params.eta / 3.0) * b1 * (b1 - b2))[1:-1]
    return numeric, exact


def beta_derivative_check(trajectory: Trajectory, params: ModelParams) -> float:
    numeric, exact = beta_rates(trajectory, params)
    return float(np.max(np.abs(numeric - exact)))


def concentration_mass(field: DensityField, eps: float) -> float:
    return split_field(field, eps).f_minus_mass


def total_mass(field: DensityField) -> float:
    return mass(field)
