"""Kinetic models of the rock-paper-scissors wealth game.

Submodules: ``core`` (grids, fields, moments), ``unconstrained`` and
``constrained`` (the two kinetic models), ``limit_models`` (their diffusion
limits), ``game_mc`` (agent simulation) and ``harness`` (runs, sweeps, CLI).
"""

__version__ = "0.1.0"
