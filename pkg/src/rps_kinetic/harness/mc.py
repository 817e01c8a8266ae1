"""Monte Carlo histograms against the matching kinetic solution."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import GridMismatchError, Trajectory, l1_distance
from . import io
from .config import ConfigError, RunConfig
from .runner import run_config

COMPARISON_CSV = "mc_compare.csv"


@dataclass
class McComparison:
    seeds: np.ndarray
    times: np.ndarray
    distances: np.ndarray  # shape (n_seeds, n_times)
    tolerance: float

    @property
    def exceeded(self) -> np.ndarray:
        return self.distances > self.tolerance

    @property
    def within_tolerance(self) -> bool:
        return not self.exceeded.any()

    def rows(self):
        for i, seed in enumerate(self.seeds):
            for j, t in enumerate(self.times):
                yield int(seed), float(t), float(self.distances[i, j]), bool(self.exceeded[i, j])


def statistical_tolerance(n_cells: int, dx: float, n_agents: int) -> float:
    return 5.0 * math.sqrt(n_cells * dx / n_agents)


def pde_reference_for(config: RunConfig, base_dir=None) -> Trajectory:
    """Kinetic solution matching a ``monte_carlo`` config."""
    pde = config.with_changes(model=config.mc_kinetic, dt=None)
    return run_config(pde, base_dir=base_dir).trajectory


def mc_compare(config: RunConfig, pde_reference: Trajectory | None = None, out_dir=None,
               base_dir=None) -> McComparison:
    if config.model != "monte_carlo":
        raise ConfigError("mc-compare needs model = monte_carlo", key="model")
    if pde_reference is None:
        pde_reference = pde_reference_for(config, base_dir)
    grid = config.grid
    if not pde_reference.grid.same_as(grid):
        raise GridMismatchError("PDE reference grid differs from the Monte Carlo grid")
    times = config.times()
    if len(pde_reference.times) != len(times) or not np.allclose(pde_reference.times, times,
                                                                 rtol=0, atol=1e-12):
        raise ValueError("PDE reference output times differ from the Monte Carlo output times")
    seeds = config.seed + np.arange(config.n_seeds)
    dist = np.empty((seeds.size, times.size))
    for i, seed in enumerate(seeds):
        mc = run_config(config.with_changes(seed=int(seed)), base_dir=base_dir).trajectory
        for j in range(times.size):
            dist[i, j] = l1_distance(mc[j], pde_reference[j])
    result = McComparison(seeds, times, dist,
                          statistical_tolerance(grid.n_cells, grid.dx, config.n_agents))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        rows = list(result.rows())
        io.write_table(
            out_dir / COMPARISON_CSV, ("seed", "t", "l1", "tolerance", "exceeded"),
            ([str(r[0]) for r in rows], [r[1] for r in rows], [r[2] for r in rows],
             [result.tolerance] * len(rows), [str(int(r[3])) for r in rows]),
        )
    return result
