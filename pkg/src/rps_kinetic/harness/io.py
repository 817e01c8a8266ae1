"""CSV and manifest files of a run.

CSVs have a header row, a fixed column order and 17 significant digits so that
identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..core import Grid1D, Trajectory

TRAJECTORY_CSV = "trajectory.csv"
MOMENTS_CSV = "moments.csv"
MANIFEST_JSON = "manifest.json"
CONFIG_TXT = "config.txt"


def fmt(value: float) -> str:
    return f"{float(value):.16e}"


def write_table(path: Path, header: Sequence[str], columns: Sequence[np.ndarray]) -> None:
    cols = [np.asarray(c) for c in columns]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")


def write_trajectory(path: Path, traj: Trajectory) -> None:
    n_t, n_x = traj.values.shape
    t = np.repeat(traj.times, n_x)
    x = np.tile(traj.grid.centers, n_t)
    write_table(path, ("t", "x", "f"), (t, x, traj.values.ravel()))


def read_trajectory(path: Path, grid: Grid1D) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = grid.n_cells
    if data.shape[0] % n:
        raise ValueError(f"{path}: row count {data.shape[0]} is not a multiple of {n} cells")
    values = data[:, 2].reshape(-1, n)
    times = data[::n, 0]
    return Trajectory(grid, times, values)


def write_moments(path: Path, traj: Trajectory, extra: Mapping[str, np.ndarray] | None = None) -> None:
    header = ["t", "mass", "first_moment", "energy", "linf"]
    cols = [traj.times, traj.masses(), traj.first_moments(), traj.energies(),
            np.abs(traj.values).max(axis=1)]
    for name, series in (extra or {}).items():
        header.append(name)
        cols.append(np.asarray(series, dtype=float))
    write_table(path, header, cols)


def read_table(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in body]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_plain(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path: Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def plot_snapshots(path: Path, traj: Trajectory, title: str = "", max_curves: int = 6) -> None:
    """Static SVG of a few snapshots; needs matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    picks = np.unique(np.linspace(0, len(traj) - 1, min(max_curves, len(traj))).round().astype(int))
    fig, ax = plt.subplots(figsize=(7, 4))
    x = traj.grid.centers
    for n in picks:
        ax.step(x, traj.values[n], where="mid", label=f"t = {traj.times[n]:.4g}", lw=1)
    ax.set_xlabel("x")
    ax.set_ylabel("f(t, x)")
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
