"""Command line entry point ``rps-kinetic``.

Exit codes: 0 success, 2 configuration error, 3 invariant violation,
4 numerical instability.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..core import StabilityError
from . import io
from .config import ConfigError, load_config
from .mc import COMPARISON_CSV, mc_compare
from .runner import InvariantViolation, check_run_dir, run_config
from .sweep import epsilon_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_INSTABILITY = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rps-kinetic",
                                     description="Kinetic rock-paper-scissors wealth models.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", type=Path, required=config_required,
                       help="key = value config file, or a manifest.json to re-run")
        p.add_argument("--out", type=Path, help="output directory (default: output_dir key)")
        p.add_argument("--seed", type=int, help="override the config seed")
        return p

    p = common(sub.add_parser("run", help="run one configuration and write its artifacts"))
    p.add_argument("--plots", action="store_true", help="also write an SVG of snapshots")
    p = common(sub.add_parser("sweep", help="payoff sweep against the diffusion limit"))
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    common(sub.add_parser("mc-compare", help="Monte Carlo histograms against the PDE"))
    p = sub.add_parser("check-invariants",
                       help="recompute the invariant checks of a finished run directory")
    p.add_argument("--out", type=Path, required=True, help="run directory to check")
    return parser


def _load(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_changes(seed=args.seed)
    base_dir = args.config.resolve().parent
    out = args.out if args.out is not None else base_dir / config.output_dir
    return config, base_dir, out


def _cmd_run(args) -> int:
    config, base_dir, out = _load(args)
    result = run_config(config, out, plots=args.plots, base_dir=base_dir, strict=True)
    for r in result.invariants:
        print(f"{'ok  ' if r.passed else 'FAIL'} {r.name}: {r.value:.3e} (tol {r.tolerance:.1e})")
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config, base_dir, out = _load(args)
    report = epsilon_sweep(config, jobs=args.jobs, out_dir=out, base_dir=base_dir)
    for eps, err in zip(report.eps_list, report.errors):
        print(f"eps={eps:<8g} error={err:.6e}")
    print(f"fitted order p = {report.fitted_order:.4f} +- {report.order_stderr:.2e} "
          f"(fit residual {report.fit_residual:.2e})")
    if report.minus_mass_gap is not None:
        print("|f_minus_mass - (rho - M)|: " + ", ".join(f"{g:.3e}" for g in report.minus_mass_gap))
    for line in report.diagnostics:
        print(f"warning: {line}")
    return EXIT_OK


def _cmd_mc_compare(args) -> int:
    config, base_dir, out = _load(args)
    result = mc_compare(config, out_dir=out, base_dir=base_dir)
    n_bad = int(result.exceeded.sum())
    print(f"tolerance {result.tolerance:.4e}; {n_bad} of {result.exceeded.size} distances exceed it")
    print(f"wrote {out / COMPARISON_CSV}")
    return EXIT_OK


def _cmd_check(args) -> int:
    if not (args.out / io.MANIFEST_JSON).exists():
        raise ConfigError(f"{args.out} has no {io.MANIFEST_JSON}")
    results = check_run_dir(args.out)
    for r in results:
        print(f"{'ok  ' if r.passed else 'FAIL'} {r.name}: {r.value:.3e} (tol {r.tolerance:.1e})")
    failed = [r for r in results if not r.passed]
    if failed:
        raise InvariantViolation(failed)
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "mc-compare": _cmd_mc_compare,
             "check-invariants": _cmd_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except InvariantViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (StabilityError, FloatingPointError) as exc:
        print(f"error: numerical instability: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
