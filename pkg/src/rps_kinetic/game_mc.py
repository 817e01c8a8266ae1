"""Agent-level Monte Carlo of the rock-paper-scissors wealth game.

Wealth is stored as ``base + units * h`` with ``base`` in ``[0, h)`` fixed at
construction and an integer stake count ``units`` that games move between
players. Games transfer whole stakes, so the total number of stakes is
conserved exactly, and in the no-debt model "can afford a stake" is the
integer test ``units >= 1``.

Time stepping uses binomial thinning of a Poisson game process. In a step of
length dt each agent starts a game with probability eta*rho*dt/2 against an
opponent drawn uniformly from the other agents; counting the games it is
drawn into, every agent plays at total rate eta*rho, which gives each of the
outcomes win/lose/draw the rate eta*rho/3 of the kinetic equation. Games
inside a step are resolved in the order of the initiating agent's index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import DensityField, Grid1D, ModelParams

__all__ = [
    "GameOutcome",
    "AgentPopulation",
    "PAYOFF_UNITS",
    "play_round",
    "step_population",
    "simulate",
    "histogram",
    "step_seed",
]

# stakes won by the row player; rows and columns are the choices 0, 1, 2,
# and each choice beats the next one cyclically
PAYOFF_UNITS = np.array([[0, 1, -1],
                         [-1, 0, 1],
                         [1, -1, 0]], dtype=np.int64)

MAX_GAME_FRACTION = 0.1


@dataclass(frozen=True)
class GameOutcome:
    delta_a: float
    delta_b: float


def play_round(choice_a: int, choice_b: int, h: float) -> GameOutcome:
    for c in (choice_a, choice_b):
        if c not in (0, 1, 2):
            raise ValueError(f"choice must be 0, 1 or 2, got {c!r}")
    if not h > 0:
        raise ValueError("payoff must be positive")
    units = int(PAYOFF_UNITS[choice_a, choice_b])
    return GameOutcome(units * h, -units * h)


@dataclass(frozen=True)
class AgentPopulation:
    base: np.ndarray
    units: np.ndarray
    h: float
    agent_weight: float
    time: float = 0.0

    def __post_init__(self):
        base = np.array(self.base, dtype=float)
        units = np.array(self.units, dtype=np.int64)
        if base.shape != units.shape or base.ndim != 1:
            raise ValueError("base and units must be 1-d arrays of equal length")
        base.flags.writeable = False
        units.flags.writeable = False
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "units", units)

    @classmethod
    def from_wealths(cls, wealths: np.ndarray, h: float, rho: float = 1.0,
                     time: float = 0.0) -> "AgentPopulation":
        w = np.asarray(wealths, dtype=float)
        if w.size < 2:
            raise ValueError("need at least 2 agents")
        units, base = np.divmod(w, h)
        # divmod can round the remainder up to h or below 0
        over = base >= h
        units[over] += 1
        base[over] -= h
        base = np.clip(base, 0.0, None)
        return cls(base, units.astype(np.int64), h, rho / w.size, time)

    @classmethod
    def sample(cls, n_agents: int, f_in: DensityField, h: float, seed: int) -> "AgentPopulation":
        """Draw ``n_agents`` wealths from the piecewise-constant density ``f_in``."""
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        p = np.clip(f_in.values, 0.0, None)
        if p.sum() <= 0:
            raise ValueError("initial density has no positive mass")
        cells = rng.choice(f_in.grid.n_cells, size=n_agents, p=p / p.sum())
        x = f_in.grid.edges[cells] + f_in.grid.dx * rng.random(n_agents)
        return cls.from_wealths(x, h, rho=float(p.sum() * f_in.grid.dx))

    @property
    def n_agents(self) -> int:
        return self.base.size

    @property
    def wealths(self) -> np.ndarray:
        return self.base + self.units * self.h

    @property
    def rho(self) -> float:
        return self.agent_weight * self.n_agents

    @property
    def total_units(self) -> int:
        return int(self.units.sum())

    def total_wealth(self) -> float:
        """Exactly conserved by play: fixed base sum plus the integer stake count."""
        return math.fsum(self.base) + self.h * self.total_units


def step_seed(seed: int, step: int) -> np.random.SeedSequence:
    """Independent stream for step ``step`` of a run seeded with ``seed``."""
    return np.random.SeedSequence(entropy=seed, spawn_key=(step,))


@njit(cache=True)
def _resolve_games(units, initiators, opponents, outcomes, constrained):
    for g in range(initiators.size):
        d = outcomes[g]
        if d == 0:
            continue
        i = initiators[g]
        j = opponents[g]
        if constrained and (units[i] < 1 or units[j] < 1):
            continue
        units[i] += d
        units[j] -= d


def step_population(pop: AgentPopulation, params: ModelParams, dt: float,
                    rng_seed) -> AgentPopulation:
    """Advance the population by ``dt``; deterministic in ``rng_seed``.

    ``rng_seed`` is an int or a ``numpy.random.SeedSequence``; it keys a Philox
    counter-based generator.
    """
    n = pop.n_agents
    if n < 2:
        raise ValueError("need at least 2 agents")
    rate = params.eta * params.rho
    if not 0 < rate * dt <= MAX_GAME_FRACTION * (1 + 1e-12):
        raise ValueError(
            f"eta*rho*dt = {rate * dt:.4g} must lie in (0, {MAX_GAME_FRACTION}] for thinning"
        )
    seq = rng_seed if isinstance(rng_seed, np.random.SeedSequence) else np.random.SeedSequence(rng_seed)
    rng = np.random.Generator(np.random.Philox(seq))
    starts = np.flatnonzero(rng.random(n) < 0.5 * rate * dt)
    m = starts.size
    opp = rng.integers(0, n - 1, size=m)
    opp += opp >= starts
    choice_a = rng.integers(0, 3, size=m)
    choice_b = rng.integers(0, 3, size=m)
    outcomes = PAYOFF_UNITS[choice_a, choice_b]
    units = pop.units.copy()
    _resolve_games(units, starts.astype(np.int64), opp.astype(np.int64), outcomes,
                   bool(params.constrained))
    return AgentPopulation(pop.base, units, pop.h, pop.agent_weight, pop.time + dt)


def simulate(pop: AgentPopulation, params: ModelParams, dt: float, output_times,
             seed: int, check=None) -> list[AgentPopulation]:
    """Run to each of the sorted ``output_times``, returning the population there.

    Steps have length at most ``dt`` and land exactly on the output times; step
    ``s`` of the run draws from ``step_seed(seed, s)``. ``check`` is called on
    every intermediate population.
    """
    if not math.isclose(pop.h, params.h, rel_tol=1e-12):
        raise ValueError("population payoff differs from params.h")
    out = []
    step = 0
    t = pop.time
    for t_out in sorted(output_times):
        span = t_out - t
        if span < -1e-12:
            raise ValueError("output times must not precede the population time")
        n_steps = int(math.ceil(span / dt * (1 - 1e-12))) if span > 0 else 0
        for _ in range(n_steps):
            pop = step_population(pop, params, span / n_steps, step_seed(seed, step))
            step += 1
            if check is not None:
                check(pop)
        pop = AgentPopulation(pop.base, pop.units, pop.h, pop.agent_weight, float(t_out))
        t = t_out
        out.append(pop)
    return out


def histogram(pop: AgentPopulation, grid: Grid1D) -> DensityField:
    w = pop.wealths
    idx = np.floor((w - grid.x_min) / grid.dx).astype(np.int64)
    # wealth exactly on x_max rounds into a non-existent cell
    idx[(idx == grid.n_cells) & (w <= grid.x_max)] = grid.n_cells - 1
    if idx.min() < 0 or idx.max() >= grid.n_cells:
        raise ValueError(
            f"wealth range [{w.min():.6g}, {w.max():.6g}] not covered by grid "
            f"[{grid.x_min:g}, {grid.x_max:g}]"
        )
    counts = np.bincount(idx, minlength=grid.n_cells)
    return DensityField(grid, counts * pop.agent_weight / grid.dx, pop.time)
