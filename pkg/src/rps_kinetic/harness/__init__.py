"""Experiment orchestration: configured runs, payoff sweeps, Monte Carlo comparisons."""

from .config import ConfigError, RunConfig, load_config, parse_config
from .runner import RunResult, run_config

__all__ = ["ConfigError", "RunConfig", "RunResult", "load_config", "parse_config", "run_config"]
