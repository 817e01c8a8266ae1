"""Execute a single configured run and write its artifacts."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from .. import constrained as cm
from .. import game_mc, limit_models
from .. import unconstrained as um
from ..core import ModelParams, StabilityError, Trajectory, mass
from . import invariants as inv
from . import io
from .config import RunConfig

log = logging.getLogger(__name__)


class InvariantViolation(RuntimeError):
    """Raised by strict runs; artifacts are written before it is raised."""

    def __init__(self, failed: list):
        self.failed = failed
        names = ", ".join(f"{r.name} (value {r.value:.3e} > tolerance {r.tolerance:.1e})"
                          for r in failed)
        super().__init__(f"invariant violated: {names}")


@dataclass
class RunResult:
    config: RunConfig
    trajectory: Trajectory
    series: dict = field(default_factory=dict)
    invariants: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)
    out_dir: Path | None = None

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.invariants)


def kinetic_params(config: RunConfig, rho: float, constrained: bool) -> ModelParams:
    params = ModelParams(config.eta, config.h, rho, constrained)
    return params.rescaled() if config.scaling == "diffusive" else params


def _pick_dt(config_dt, bound: float) -> float:
    if config_dt is None:
        return bound
    if config_dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt={config_dt!r} exceeds the stability bound {bound!r}")
    return config_dt


def run_config(config: RunConfig, out_dir: str | Path | None = None, plots: bool = False,
               base_dir: Path | None = None, strict: bool = False) -> RunResult:
    """Run ``config``; with ``out_dir`` write CSVs, config and manifest there.

    ``strict`` raises ``InvariantViolation`` (after writing) if any automatic
    invariant check fails.
    """
    grid = config.grid
    f_in = config.initial_field(grid, base_dir)
    rho = mass(f_in)
    times = config.times()
    derived: dict = {"rho": rho, "dx": grid.dx}
    series: dict = {}
    model = config.model

    if model in ("unconstrained", "constrained"):
        is_c = model == "constrained"
        params = kinetic_params(config, rho, is_c)
        bound = (cm if is_c else um).max_stable_dt(params)
        dt = _pick_dt(config.dt, bound)
        derived.update(effective_eta=params.eta, shift_cells=grid.cells_per(params.h),
                       stability_bound=bound, dt=dt)
        if is_c:
            traj = cm.solve_constrained(f_in, params, config.t_end, dt, times)
            derived["contraction_horizon"] = cm.contraction_horizon(params)
            series["beta"] = cm.tail_mass_series(traj, params.h, 1)
            checks = inv.check_constrained(traj, params)
        else:
            traj = um.solve_unconstrained(f_in, params, config.t_end, dt, times)
            checks = inv.check_unconstrained(traj)
        width = grid.cells_per(params.h)
    elif model == "heat":
        diffusivity = config.eta * rho / 3.0
        derived["diffusivity"] = diffusivity
        fields = [limit_models.solve_heat(f_in, diffusivity, t) for t in times]
        traj = Trajectory.from_fields(fields)
        checks = inv.check_heat(traj)
        width = 1
    elif model == "nonlocal":
        bound = limit_models.nonlocal_max_stable_dt(grid.dx, config.eta, rho) if rho > 0 else np.inf
        dt = _pick_dt(config.dt, bound)
        derived.update(stability_bound=bound, dt=dt)
        report = limit_models.solve_nonlocal_diffusion(f_in, config.eta, config.t_end, dt, times)
        traj = report.trajectory
        series["internal_time"] = report.internal_time_series
        checks = inv.check_nonlocal(traj, config.eta, report.internal_time_series)
        width = 1
    elif model == "monte_carlo":
        traj, mc_series, checks, mc_derived = _run_monte_carlo(config, f_in, times)
        series.update(mc_series)
        derived.update(mc_derived)
        width = grid.cells_per(config.h)
    else:
        raise ValueError(f"unknown model {model!r}")

    leak = inv.boundary_leakage(traj, width)
    if model in ("constrained", "nonlocal") or config.kinetic_model == "constrained":
        leak["left"] = None
    manifest = {
        "code_version": __version__,
        "model": model,
        "seed": config.seed,
        "config": config.to_dict(),
        "derived": derived,
        "invariants": {r.name: r.to_dict() for r in checks},
        "all_invariants_passed": all(r.passed for r in checks),
        "leakage": leak,
        "outputs": [io.TRAJECTORY_CSV, io.MOMENTS_CSV, io.CONFIG_TXT],
    }
    for side in ("left", "right"):
        if leak[side] is not None and leak[side] > 1e-12:
            log.warning("mass %.3e in the %s boundary cells; widen the domain", leak[side], side)
    result = RunResult(config, traj, series, checks, manifest)
    if out_dir is not None:
        write_run(result, Path(out_dir), plots)
    if strict and not result.ok:
        raise InvariantViolation([r for r in checks if not r.passed])
    return result


def _run_monte_carlo(config: RunConfig, f_in, times):
    is_c = config.mc_kinetic == "constrained"
    pop = game_mc.AgentPopulation.sample(config.n_agents, f_in, config.h, config.seed)
    params = kinetic_params(config, pop.rho, is_c)
    units0 = pop.total_units
    low = [float(pop.wealths.min())]

    def watch(p):
        if p.total_units != units0:
            raise AssertionError("stake count changed during a step")
        low[0] = min(low[0], float(p.wealths.min()))

    # offset keeps the game streams apart from the sampling stream
    pops = game_mc.simulate(pop, params, config.mc_dt, times, config.seed + 1_000_003,
                            check=watch)
    fields = [game_mc.histogram(p, config.grid) for p in pops]
    traj = Trajectory.from_fields(fields)
    drift = pops[-1].total_units - units0
    checks = inv.check_monte_carlo(traj, pop.rho, drift, low[0], is_c)
    series = {"total_wealth": np.array([p.total_wealth() for p in pops])}
    derived = {"effective_eta": params.eta, "mc_dt": config.mc_dt, "n_agents": config.n_agents,
               "agent_weight": pop.agent_weight}
    return traj, series, checks, derived


def write_run(result: RunResult, out_dir: Path, plots: bool = False) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    io.write_trajectory(out_dir / io.TRAJECTORY_CSV, result.trajectory)
    io.write_moments(out_dir / io.MOMENTS_CSV, result.trajectory, result.series)
    (out_dir / io.CONFIG_TXT).write_text(result.config.to_text(), encoding="utf-8")
    if plots:
        io.plot_snapshots(out_dir / "snapshots.svg", result.trajectory,
                          title=f"{result.config.model} model")
        result.manifest["outputs"].append("snapshots.svg")
    io.write_json(out_dir / io.MANIFEST_JSON, result.manifest)
    result.out_dir = out_dir


def check_run_dir(out_dir: str | Path) -> list:
    """Recompute the invariants of a finished run from its CSV files."""
    out_dir = Path(out_dir)
    manifest = io.read_json(out_dir / io.MANIFEST_JSON)
    from .config import config_from_dict

    config = config_from_dict(manifest["config"])
    traj = io.read_trajectory(out_dir / io.TRAJECTORY_CSV, config.grid)
    model = config.model
    rho = manifest["derived"]["rho"]
    if model == "unconstrained":
        return inv.check_unconstrained(traj)
    if model == "constrained":
        return inv.check_constrained(traj, kinetic_params(config, rho, True))
    if model == "heat":
        return inv.check_heat(traj)
    if model == "nonlocal":
        tau = io.read_table(out_dir / io.MOMENTS_CSV)["internal_time"]
        return inv.check_nonlocal(traj, config.eta, tau)
    stored = manifest["invariants"]
    drift = 0 if stored["zero_sum"]["passed"] else int(stored["zero_sum"]["value"])
    low = -stored["nonnegative_wealth"]["value"] if "nonnegative_wealth" in stored else 0.0
    return inv.check_monte_carlo(traj, rho, drift, low, config.mc_kinetic == "constrained")
