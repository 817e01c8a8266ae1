"""Payoff sweeps of the rescaled kinetic models against their diffusion limits.

Each payoff ``eps`` runs on its own grid with ``cells_per_eps`` cells per
payoff, the base domain snapped outward to whole multiples of ``eps``. The
reported error is the l1 distance of the two solutions after averaging over
cells of width ``eps``; the kinetic solution at finite ``eps`` is a staircase
on that scale, so the plain (strong) l1 distance is also recorded but cannot
converge faster than first order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import linregress

from .. import constrained as cm
from .. import limit_models
from ..core import DensityField, coarsen, l1_distance, mass
from . import io
from .config import ConfigError, RunConfig
from .runner import run_config

log = logging.getLogger(__name__)


@dataclass
class ConvergenceReport:
    model: str
    t_end: float
    eps_list: list
    errors: list
    strong_errors: list
    fitted_order: float
    order_stderr: float
    fit_residual: float
    monotone: bool
    minus_mass: list | None = None
    limit_minus_mass: float | None = None
    minus_mass_gap: list | None = None
    diagnostics: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def sweep_config(base: RunConfig, eps: float) -> RunConfig:
    """Per-payoff run configuration: diffusive scaling, domain snapped to ``eps``."""
    x_min = math.floor(base.x_min / eps + 1e-9) * eps
    x_max = math.ceil(base.x_max / eps - 1e-9) * eps
    n_eps = int(round((x_max - x_min) / eps))
    return base.with_changes(
        h=eps, scaling="diffusive", x_min=x_min, x_max=x_max,
        n_cells=n_eps * base.cells_per_eps, eps_list=None, dt=None,
        output_times=(base.t_end,),
    )


def _sweep_entry(base: RunConfig, eps: float, out_dir: str | None, base_dir) -> dict:
    config = sweep_config(base, eps)
    sub = None if out_dir is None else Path(out_dir) / f"eps_{eps:.6g}"
    result = run_config(config, sub, base_dir=base_dir)
    kinetic = result.trajectory.final
    f_in = config.initial_field(config.grid, base_dir)
    rho = mass(f_in)
    entry = {"eps": eps, "invariants_ok": result.ok}
    if base.model == "unconstrained":
        limit = limit_models.solve_heat(f_in, base.eta * rho / 3.0, base.t_end)
        compare = kinetic
    else:
        oracle = limit_models.reparametrized_oracle(f_in, base.eta, base.t_end, [base.t_end])
        limit = oracle.trajectory.final
        split = cm.split_field(kinetic, eps)
        compare = split.f_plus
        entry["minus_mass"] = split.f_minus_mass
        entry["limit_minus_mass"] = rho - float(oracle.mass_series[-1])
    factor = base.cells_per_eps
    entry["error"] = l1_distance(coarsen(compare, factor), coarsen(limit, factor))
    entry["strong_error"] = l1_distance(compare, limit)
    return entry


def epsilon_sweep(base: RunConfig, eps_list=None, jobs: int = 1, out_dir=None,
                  base_dir=None) -> ConvergenceReport:
    eps_list = list(eps_list if eps_list is not None else (base.eps_list or ()))
    if base.model not in ("unconstrained", "constrained"):
        raise ConfigError("sweeps need model = unconstrained or constrained", key="model")
    if len(eps_list) < 2:
        raise ConfigError("a sweep needs at least two payoffs", key="eps_list")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("must be strictly decreasing", key="eps_list")
    args = [(base, float(e), None if out_dir is None else str(out_dir), base_dir) for e in eps_list]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_sweep_entry, *a) for a in args]
            entries = [f.result() for f in futures]
    else:
        entries = [_sweep_entry(*a) for a in args]
    # ordered reduce: entries follow eps_list regardless of completion order
    report = _reduce(base, entries)
    if out_dir is not None:
        _write_report(Path(out_dir), report)
    return report


def _reduce(base: RunConfig, entries: list[dict]) -> ConvergenceReport:
    eps = np.array([e["eps"] for e in entries])
    errors = np.array([e["error"] for e in entries])
    strong = np.array([e["strong_error"] for e in entries])
    diagnostics = []
    if np.any(errors <= 0):
        diagnostics.append("zero error at some payoff; the order fit is meaningless")
        fit_err = np.maximum(errors, np.finfo(float).tiny)
    else:
        fit_err = errors
    fit = linregress(np.log(eps), np.log(fit_err))
    resid = np.log(fit_err) - (fit.intercept + fit.slope * np.log(eps))
    monotone = bool(np.all(np.diff(errors) < 0))
    if not monotone:
        diagnostics.append("errors not strictly decreasing: " + ", ".join(
            f"eps={a:g}: {b:.3e}" for a, b in zip(eps, errors)))
    for e in entries:
        if not e["invariants_ok"]:
            diagnostics.append(f"invariant check failed at eps={e['eps']:g}")
    report = ConvergenceReport(
        model=base.model, t_end=base.t_end, eps_list=eps.tolist(), errors=errors.tolist(),
        strong_errors=strong.tolist(), fitted_order=float(fit.slope),
        order_stderr=float(fit.stderr), fit_residual=float(np.sqrt(np.mean(resid**2))),
        monotone=monotone, diagnostics=diagnostics,
    )
    if base.model == "constrained":
        minus = np.array([e["minus_mass"] for e in entries])
        limit = entries[0]["limit_minus_mass"]
        gap = np.abs(minus - limit)
        report.minus_mass = minus.tolist()
        report.limit_minus_mass = float(limit)
        report.minus_mass_gap = gap.tolist()
        if not np.all(np.diff(gap) < 0):
            diagnostics.append("|f_minus_mass - (rho - M)| not strictly decreasing")
    for line in diagnostics:
        log.warning("sweep: %s", line)
    return report


def _write_report(out_dir: Path, report: ConvergenceReport) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["eps", "error", "strong_error"]
    cols = [report.eps_list, report.errors, report.strong_errors]
    if report.minus_mass is not None:
        header += ["minus_mass", "minus_mass_gap"]
        cols += [report.minus_mass, report.minus_mass_gap]
    io.write_table(out_dir / "convergence.csv", header, cols)
    io.write_json(out_dir / "convergence.json", report.to_dict())
