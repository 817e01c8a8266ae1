"""Automatic invariant checks recorded in every run manifest."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..constrained import beta_lower_bound, tail_mass_series
from ..core import ModelParams, Trajectory

MASS_TOL = 1e-10
POSITIVITY_TOL = 1e-12
LINF_TOL = 1e-10
BETA_BOUND_TOL = 1e-8
MONOTONE_TOL = 1e-12


@dataclass(frozen=True)
class InvariantResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _result(name, value, tolerance, passed=None, detail=""):
    value = float(value)
    if passed is None:
        passed = value <= tolerance
    return InvariantResult(name, bool(passed), value, float(tolerance), detail)


def _conservation(traj: Trajectory) -> list[InvariantResult]:
    masses = traj.masses()
    m1 = traj.first_moments()
    scale = max(1.0, abs(masses[0]))
    reach = 1.0 + max(abs(traj.grid.x_min), abs(traj.grid.x_max))
    return [
        _result("mass_conservation", np.max(np.abs(masses - masses[0])), MASS_TOL * scale,
                detail="max |mass(t) - mass(0)|"),
        _result("first_moment_conservation", np.max(np.abs(m1 - m1[0])), MASS_TOL * reach * scale,
                detail="max |first_moment(t) - first_moment(0)|"),
    ]


def _positivity(traj: Trajectory) -> InvariantResult:
    return _result("positivity", -min(traj.values.min(), 0.0), POSITIVITY_TOL,
                   detail="-min f over all samples")


def check_unconstrained(traj: Trajectory) -> list[InvariantResult]:
    out = _conservation(traj)
    f0 = traj.values[0]
    if f0.min() >= 0:
        out.append(_positivity(traj))
    excess = traj.values.max() - f0.max()
    out.append(_result("linf_bound", max(excess, 0.0), LINF_TOL, detail="max f(t) - max f_in"))
    e = traj.energies()
    growth = np.diff(e) / np.maximum(e[:-1], np.finfo(float).tiny)
    out.append(_result("energy_nonincreasing", max(growth.max(initial=0.0), 0.0), MONOTONE_TOL,
                       detail="largest relative energy increase between samples"))
    return out


def check_constrained(traj: Trajectory, params: ModelParams) -> list[InvariantResult]:
    out = _conservation(traj)
    out.append(_positivity(traj))
    k = traj.grid.cells_per(params.h)
    tail = traj.values[:, k:]
    excess = tail.max() - tail[0].max() if tail.size else 0.0
    out.append(_result("tail_linf_bound", max(excess, 0.0), LINF_TOL,
                       detail="max over x >= h of f(t) minus the same for f_in"))
    beta = tail_mass_series(traj, params.h, 1)
    out.append(_result("beta_nonincreasing", max(np.diff(beta).max(initial=0.0), 0.0), MONOTONE_TOL,
                       detail="largest increase of beta between samples"))
    bound = np.array([beta_lower_bound(max(beta[0], 0.0), params.eta, t - traj.times[0])
                      for t in traj.times])
    out.append(_result("beta_lower_bound", max((bound - beta).max(), 0.0), BETA_BOUND_TOL,
                       detail="largest shortfall below beta(0)/(beta(0) eta t/3 + 1)"))
    n_tails = -(-traj.grid.n_cells // k)
    betas = np.stack([tail_mass_series(traj, params.h, j) for j in range(n_tails + 1)], axis=1)
    out.append(_result("beta_nesting", max(np.diff(betas, axis=1).max(initial=0.0), 0.0),
                       MONOTONE_TOL, detail="largest beta_(k+1) - beta_k"))
    return out


def check_heat(traj: Trajectory) -> list[InvariantResult]:
    out = [_conservation(traj)[0]]
    if traj.values[0].min() >= 0:
        out.append(_positivity(traj))
    return out


def check_nonlocal(traj: Trajectory, eta: float, internal_time: np.ndarray) -> list[InvariantResult]:
    masses = traj.masses()
    rho = masses[0]
    out = [
        _result("mass_nonincreasing", max(np.diff(masses).max(initial=0.0), 0.0),
                MONOTONE_TOL * max(1.0, rho), detail="largest mass increase between samples"),
        _positivity(traj),
    ]
    linear = eta * rho * (traj.times - traj.times[0]) / 3.0
    out.append(_result("time_change_comparison", max((internal_time - linear).max(), 0.0),
                       MONOTONE_TOL * max(1.0, linear[-1]),
                       detail="largest tau(t) - (eta/3) rho t"))
    return out


def check_monte_carlo(traj: Trajectory, rho: float, units_drift: int, min_wealth: float,
                      constrained: bool) -> list[InvariantResult]:
    masses = traj.masses()
    out = [
        _result("zero_sum", abs(units_drift), 0.0, passed=units_drift == 0,
                detail="change of the total stake count over all steps"),
        _result("histogram_mass", np.max(np.abs(masses - rho)), 1e-12 * max(1.0, rho),
                detail="max |mass(histogram) - rho|"),
    ]
    if constrained:
        out.append(_result("nonnegative_wealth", -min(min_wealth, 0.0), 0.0,
                           passed=min_wealth >= 0, detail="-min wealth over all steps"))
    return out


def boundary_leakage(traj: Trajectory, width: int) -> dict:
    """Largest mass held by the outermost ``width`` cells on each side."""
    dx = traj.grid.dx
    left = traj.values[:, :width].sum(axis=1).max() * dx
    right = traj.values[:, -width:].sum(axis=1).max() * dx
    return {"cells": int(width), "left": float(left), "right": float(right)}
