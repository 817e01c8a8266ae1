"""Flat ``key = value`` run configuration.

One setting per line, ``#`` starts a comment. Keys:

    model          unconstrained | constrained | heat | nonlocal | monte_carlo
    eta            interaction rate (> 0)
    h              payoff; required by kinetic and Monte Carlo runs
    scaling        direct | diffusive   (diffusive: rate eta/h**2, payoff h = eps)
    x_min, x_max, n_cells   grid
    dt             time step (default: the model's stability bound)
    t_end          final time
    output_times   comma-separated times; overrides n_outputs
    n_outputs      number of evenly spaced output times (default 11)
    initial        indicator(a, b) | gaussian(mean, sigma) | csv(path)
    seed           Monte Carlo seed
    n_agents       Monte Carlo population size
    mc_kinetic     unconstrained | constrained  (game variant of monte_carlo runs)
    mc_dt          Monte Carlo step
    n_seeds        number of seeds for mc-compare
    eps_list       comma-separated payoffs for sweep
    cells_per_eps  grid refinement per payoff in sweeps
    output_dir     default output directory
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from ..core import AlignmentError, DensityField, Grid1D

MODELS = ("unconstrained", "constrained", "heat", "nonlocal", "monte_carlo")
KINETIC = ("unconstrained", "constrained")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


_PARSERS = {
    "model": str,
    "eta": float,
    "h": float,
    "scaling": str,
    "x_min": float,
    "x_max": float,
    "n_cells": int,
    "dt": float,
    "t_end": float,
    "output_times": _floats,
    "n_outputs": int,
    "initial": str,
    "seed": int,
    "n_agents": int,
    "mc_kinetic": str,
    "mc_dt": float,
    "n_seeds": int,
    "eps_list": _floats,
    "cells_per_eps": int,
    "output_dir": str,
}


@dataclass(frozen=True)
class RunConfig:
    model: str
    eta: float
    t_end: float
    x_min: float
    x_max: float
    n_cells: int
    initial: str
    h: float | None = None
    scaling: str = "direct"
    dt: float | None = None
    output_times: tuple[float, ...] | None = None
    n_outputs: int = 11
    seed: int = 0
    n_agents: int = 100_000
    mc_kinetic: str = "unconstrained"
    mc_dt: float = 0.01
    n_seeds: int = 1
    eps_list: tuple[float, ...] | None = None
    cells_per_eps: int = 2
    output_dir: str = "out"

    @property
    def grid(self) -> Grid1D:
        return Grid1D(self.x_min, self.x_max, self.n_cells)

    @property
    def kinetic_model(self) -> str:
        return self.mc_kinetic if self.model == "monte_carlo" else self.model

    def times(self) -> np.ndarray:
        if self.output_times is not None:
            return np.array(sorted(set(self.output_times) | {0.0}))
        return np.linspace(0.0, self.t_end, self.n_outputs)

    def initial_field(self, grid: Grid1D | None = None, base_dir: Path | None = None) -> DensityField:
        return parse_initial(self.initial, grid or self.grid, base_dir)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = ", ".join(repr(float(v)) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    def with_changes(self, **changes) -> "RunConfig":
        return replace(self, **changes)


_REQUIRED = ("model", "eta", "t_end", "x_min", "x_max", "n_cells", "initial")


def parse_config(text: str) -> RunConfig:
    values: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError("unknown key", lineno, key)
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", lineno, key)
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"cannot parse {value!r}: {exc}", lineno, key) from None
        lines[key] = lineno
    for key in _REQUIRED:
        if key not in values:
            raise ConfigError("missing required key", key=key)
    config = RunConfig(**values)
    validate(config, lines)
    return config


def load_config(path: str | Path) -> RunConfig:
    """Read a config file, or the config stored in a run manifest (``.json``)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if path.suffix == ".json":
        try:
            stored = json.loads(text)["config"]
        except (KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path} is not a run manifest: {exc}") from None
        return config_from_dict(stored)
    return parse_config(text)


def config_from_dict(data: dict) -> RunConfig:
    unknown = set(data) - set(_PARSERS)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}")
    values = {k: (tuple(v) if isinstance(v, list) else v) for k, v in data.items() if v is not None}
    config = RunConfig(**values)
    validate(config, {})
    return config


def validate(config: RunConfig, lines: dict) -> None:
    def fail(key, message):
        raise ConfigError(message, lines.get(key), key)

    if config.model not in MODELS:
        fail("model", f"must be one of {', '.join(MODELS)}")
    if config.scaling not in ("direct", "diffusive"):
        fail("scaling", "must be 'direct' or 'diffusive'")
    if config.mc_kinetic not in KINETIC:
        fail("mc_kinetic", f"must be one of {', '.join(KINETIC)}")
    for key in ("eta", "t_end"):
        value = getattr(config, key)
        if not (math.isfinite(value) and value > 0):
            fail(key, "must be finite and > 0")
    try:
        grid = config.grid
    except ValueError as exc:
        fail("n_cells", str(exc))
    if config.dt is not None and not config.dt > 0:
        fail("dt", "must be > 0")
    if config.n_outputs < 2:
        fail("n_outputs", "must be >= 2")
    if config.output_times is not None:
        if any(t < 0 or t > config.t_end for t in config.output_times):
            fail("output_times", "times must lie in [0, t_end]")
    if config.n_agents < 2:
        fail("n_agents", "must be >= 2")
    if config.n_seeds < 1:
        fail("n_seeds", "must be >= 1")
    if config.cells_per_eps < 1:
        fail("cells_per_eps", "must be >= 1")
    if not config.mc_dt > 0:
        fail("mc_dt", "must be > 0")
    half_line = config.kinetic_model == "constrained" or config.model == "nonlocal"
    if half_line and abs(config.x_min) > 0:
        fail("x_min", "half-line models need x_min = 0")
    needs_h = config.model in ("unconstrained", "constrained", "monte_carlo")
    if config.eps_list is not None:
        if any(not e > 0 for e in config.eps_list):
            fail("eps_list", "payoffs must be > 0")
        if any(b >= a for a, b in zip(config.eps_list, config.eps_list[1:])):
            fail("eps_list", "must be strictly decreasing")
    elif needs_h:
        if config.h is None:
            fail("h", f"required for model '{config.model}'")
        if not config.h > 0:
            fail("h", "must be > 0")
        try:
            grid.cells_per(config.h)
        except AlignmentError as exc:
            fail("h", str(exc))
    if not re.match(r"^\s*(indicator|gaussian|csv)\s*\(.*\)\s*$", config.initial):
        fail("initial", "expected indicator(a, b), gaussian(mean, sigma) or csv(path)")


def parse_initial(spec: str, grid: Grid1D, base_dir: Path | None = None) -> DensityField:
    m = re.match(r"^\s*(\w+)\s*\((.*)\)\s*$", spec)
    if not m:
        raise ConfigError(f"bad initial condition {spec!r}", key="initial")
    kind, args = m.group(1), m.group(2)
    if kind in ("indicator", "gaussian"):
        try:
            a, b = (float(v) for v in args.split(","))
        except ValueError:
            raise ConfigError(f"{kind} takes two numbers, got {args!r}", key="initial") from None
        if kind == "indicator":
            if not a < b:
                raise ConfigError("indicator(a, b) needs a < b", key="initial")
            return DensityField.indicator(grid, a, b)
        if not b > 0:
            raise ConfigError("gaussian sigma must be > 0", key="initial")
        return DensityField.gaussian(grid, a, b)
    if kind == "csv":
        path = Path(args.strip().strip("'\""))
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return _read_initial_csv(path, grid)
    raise ConfigError(f"unknown initial shape {kind!r}", key="initial")


def _read_initial_csv(path: Path, grid: Grid1D) -> DensityField:
    """CSV with a header containing column ``f`` (and optionally ``x``), one row per cell."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read initial CSV: {exc}", key="initial") from None
    if not rows or "f" not in rows[0]:
        raise ConfigError("initial CSV needs a header with column 'f'", key="initial")
    if len(rows) != grid.n_cells:
        raise ConfigError(f"initial CSV has {len(rows)} rows, grid has {grid.n_cells} cells",
                          key="initial")
    values = np.array([float(r["f"]) for r in rows])
    if "x" in rows[0]:
        x = np.array([float(r["x"]) for r in rows])
        if not np.allclose(x, grid.centers, rtol=0, atol=1e-9 * grid.dx + 1e-12):
            raise ConfigError("initial CSV x column does not match the cell centers", key="initial")
    return DensityField(grid, values)
