"""Grids, cell-averaged density fields, moments and the RK4 stepper.

Every solver in the package represents a density by its cell averages on a
uniform grid and integrates with the midpoint rule. Payoffs are required to be
whole multiples of the cell width so that a shift by the payoff maps cells onto
cells exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "AlignmentError",
    "StabilityError",
    "GridMismatchError",
    "Grid1D",
    "DensityField",
    "ModelParams",
    "MomentReport",
    "Trajectory",
    "make_grid",
    "mass",
    "first_moment",
    "second_moment",
    "energy",
    "linf",
    "l1_distance",
    "moments",
    "shift",
    "coarsen",
    "integrate_rk4",
]

# relative slack used when checking that a payoff is a whole number of cells
_ALIGN_RTOL = 1e-9


class AlignmentError(ValueError):
    """Payoff is not an integer multiple of the cell width."""


class StabilityError(ValueError):
    """Time step exceeds the documented stability bound."""


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise ValueError("grid bounds must be finite")
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise ValueError(f"n_cells must be an integer >= 2, got {self.n_cells}")
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be smaller than x_max")
        object.__setattr__(self, "x_min", float(self.x_min))
        object.__setattr__(self, "x_max", float(self.x_max))
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def edges(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_cells + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + self.dx * (np.arange(self.n_cells) + 0.5)

    def cells_per(self, length: float) -> int:
        """Number of cells spanned by ``length``; raises unless it is whole."""
        ratio = length / self.dx
        k = int(round(ratio))
        if k < 1 or abs(ratio - k) > _ALIGN_RTOL * max(1.0, ratio):
            raise AlignmentError(
                f"payoff {length!r} is not a positive integer multiple of dx={self.dx!r} "
                "(exact-shift alignment rule: h = k*dx)"
            )
        return k

    def boundary_index(self, x: float) -> int:
        """Index of the cell edge located at ``x``; raises unless ``x`` is an edge."""
        ratio = (x - self.x_min) / self.dx
        i = int(round(ratio))
        if abs(ratio - i) > _ALIGN_RTOL * max(1.0, abs(ratio)) or not 0 <= i <= self.n_cells:
            raise AlignmentError(f"x={x!r} is not a cell boundary of the grid")
        return i

    def same_as(self, other: "Grid1D") -> bool:
        return (
            self.n_cells == other.n_cells
            and math.isclose(self.x_min, other.x_min, rel_tol=1e-12, abs_tol=1e-12)
            and math.isclose(self.x_max, other.x_max, rel_tol=1e-12, abs_tol=1e-12)
        )


def make_grid(x_min: float, x_max: float, n_cells: int) -> Grid1D:
    return Grid1D(x_min, x_max, n_cells)


@dataclass(frozen=True)
class DensityField:
    """Cell averages of a density on ``grid`` at ``time``.

    The value array is copied and frozen on construction.
    """

    grid: Grid1D
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n_cells,):
            raise ValueError(
                f"expected {self.grid.n_cells} cell values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite")
        if not (math.isfinite(self.time) and self.time >= 0):
            raise ValueError("time must be finite and non-negative")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def zeros(cls, grid: Grid1D, time: float = 0.0) -> "DensityField":
        return cls(grid, np.zeros(grid.n_cells), time)

    @classmethod
    def from_function(cls, grid: Grid1D, func: Callable[[np.ndarray], np.ndarray],
                      time: float = 0.0, order: int = 8) -> "DensityField":
        """Cell averages of ``func`` by Gauss-Legendre quadrature on each cell."""
        nodes, weights = np.polynomial.legendre.leggauss(order)
        left = grid.edges[:-1]
        x = left[:, None] + 0.5 * grid.dx * (nodes[None, :] + 1.0)
        vals = np.asarray(func(x), dtype=float)
        return cls(grid, 0.5 * vals @ weights, time)

    @classmethod
    def indicator(cls, grid: Grid1D, a: float, b: float, height: float = 1.0) -> "DensityField":
        """Exact cell averages of ``height * 1_[a, b)``."""
        left = grid.edges[:-1]
        right = grid.edges[1:]
        frac = np.clip((np.minimum(right, b) - np.maximum(left, a)) / grid.dx, 0.0, 1.0)
        # snap round-off so that fully covered cells carry exactly ``height``
        frac[np.abs(frac - 1.0) < 1e-12] = 1.0
        frac[frac < 1e-12] = 0.0
        return cls(grid, height * frac)

    @classmethod
    def gaussian(cls, grid: Grid1D, mean: float, sigma: float, total: float = 1.0) -> "DensityField":
        """Exact cell averages of a normal density with the given total mass."""
        from scipy.special import ndtr

        cdf = ndtr((grid.edges - mean) / sigma)
        return cls(grid, total * np.diff(cdf) / grid.dx)

    def with_values(self, values: np.ndarray, time: float | None = None) -> "DensityField":
        return DensityField(self.grid, values, self.time if time is None else time)

    def __mul__(self, alpha: float) -> "DensityField":
        return self.with_values(alpha * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True)
class ModelParams:
    """Interaction rate, payoff, total mass and domain constraint of a model."""

    eta: float
    h: float
    rho: float
    constrained: bool = False

    def __post_init__(self):
        for name in ("eta", "h", "rho"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")

    @classmethod
    def for_field(cls, f_in: DensityField, eta: float, h: float,
                  constrained: bool = False) -> "ModelParams":
        return cls(eta=eta, h=h, rho=mass(f_in), constrained=constrained)

    def rescaled(self) -> "ModelParams":
        """Diffusive (quasi-invariant) scaling: rate eta/h**2 with payoff h = eps."""
        return ModelParams(self.eta / self.h**2, self.h, self.rho, self.constrained)


@dataclass(frozen=True)
class MomentReport:
    mass: float
    first_moment: float
    energy: float
    linf: float
    time: float


@dataclass(frozen=True)
class Trajectory:
    """Fields sampled at increasing times on one grid.

    ``values[n]`` holds the cell averages at ``times[n]``.
    """

    grid: Grid1D
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if values.shape != (times.size, self.grid.n_cells):
            raise ValueError("trajectory values must have shape (n_times, n_cells)")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_fields(cls, fields: Sequence[DensityField]) -> "Trajectory":
        grid = fields[0].grid
        if any(not f.grid.same_as(grid) for f in fields):
            raise GridMismatchError("all fields of a trajectory must share a grid")
        return cls(grid, [f.time for f in fields], np.stack([f.values for f in fields]))

    def __len__(self) -> int:
        return self.times.size

    def __getitem__(self, n: int) -> DensityField:
        return DensityField(self.grid, self.values[n], self.times[n])

    def __iter__(self) -> Iterator[DensityField]:
        for n in range(len(self)):
            yield self[n]

    @property
    def final(self) -> DensityField:
        return self[len(self) - 1]

    def masses(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.grid.dx

    def first_moments(self) -> np.ndarray:
        return self.values @ self.grid.centers * self.grid.dx

    def energies(self) -> np.ndarray:
        return 0.5 * np.sum(self.values**2, axis=1) * self.grid.dx


def mass(f: DensityField) -> float:
    return float(np.sum(f.values) * f.grid.dx)


def first_moment(f: DensityField) -> float:
    return float(np.dot(f.values, f.grid.centers) * f.grid.dx)


def second_moment(f: DensityField) -> float:
    return float(np.dot(f.values, f.grid.centers**2) * f.grid.dx)


def energy(f: DensityField) -> float:
    return float(0.5 * np.dot(f.values, f.values) * f.grid.dx)


def linf(f: DensityField) -> float:
    return float(np.max(np.abs(f.values)))


def l1_distance(a: DensityField, b: DensityField) -> float:
    if not a.grid.same_as(b.grid):
        raise GridMismatchError("l1_distance needs fields on the same grid")
    return float(np.sum(np.abs(a.values - b.values)) * a.grid.dx)


def moments(f: DensityField) -> MomentReport:
    return MomentReport(mass(f), first_moment(f), energy(f), linf(f), f.time)


def shift(values: np.ndarray, k: int) -> np.ndarray:
    """``out[i] = values[i + k]`` with zeros where ``i + k`` leaves the array."""
    out = np.zeros_like(values)
    n = values.shape[-1]
    if k == 0:
        out[...] = values
    elif 0 < k < n:
        out[..., : n - k] = values[..., k:]
    elif -n < k < 0:
        out[..., -k:] = values[..., : n + k]
    return out


def coarsen(f: DensityField, factor: int) -> DensityField:
    """Average blocks of ``factor`` consecutive cells."""
    n = f.grid.n_cells
    if factor < 1 or n % factor:
        raise ValueError(f"cannot coarsen {n} cells by a factor of {factor}")
    grid = Grid1D(f.grid.x_min, f.grid.x_max, n // factor)
    return DensityField(grid, f.values.reshape(-1, factor).mean(axis=1), f.time)


def integrate_rk4(rhs: Callable[[np.ndarray], np.ndarray], y0: np.ndarray,
                  output_times: Sequence[float], dt: float,
                  on_step: Callable[[float, np.ndarray], None] | None = None) -> np.ndarray:
    """Classical RK4 for an autonomous system, landing exactly on each output time.

    Each interval between consecutive output times is split into the smallest
    number of equal steps not exceeding ``dt``. Returns an array with one row
    per output time; ``output_times[0]`` is the time of ``y0``.
    """
    times = np.asarray(output_times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("need at least one output time")
    if np.any(np.diff(times) < 0):
        raise ValueError("output times must be non-decreasing")
    if not dt > 0:
        raise ValueError("dt must be positive")
    y = np.array(y0, dtype=float)
    out = np.empty((times.size,) + y.shape)
    out[0] = y
    t = times[0]
    for n in range(1, times.size):
        span = times[n] - times[n - 1]
        steps = int(math.ceil(span / dt * (1 - 1e-12))) if span > 0 else 0
        if steps:
            step = span / steps
            for _ in range(steps):
                k1 = rhs(y)
                k2 = rhs(y + 0.5 * step * k1)
                k3 = rhs(y + 0.5 * step * k2)
                k4 = rhs(y + step * k3)
                y = y + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                t += step
                if not np.all(np.isfinite(y)):
                    raise FloatingPointError(f"non-finite state at t={t:.6g}")
                if on_step is not None:
                    on_step(t, y)
        t = times[n]
        out[n] = y
    return out
