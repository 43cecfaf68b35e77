#!/usr/bin/env python3
"""
Lagrange VQA Differential-Equation Solver
=========================================

Variational quantum solver for ordinary differential equations with a Lagrange-interpolation
feature map, evaluated on a simulated statevector.

REQUIREMENTS:
-------------
Python dependencies:
  pip install -r requirements.txt

USAGE:
------
  python main.py run configs/dmss_hl.json [--seed-override N]
  python main.py budget configs/poisson_neumann.json
  python main.py verify

EXIT CODES:
-----------
  0: success
  2: configuration error
  3: a training run diverged

ENVIRONMENT:
------------
  LAGRANGE_VQA_OUTPUT_DIR overrides the configured output directory.
"""

import argparse
import logging
import sys

from config import APP_NAME, APP_VERSION
from utils.exceptions import ConfigError, DivergenceError, ReportError, SolverError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def check_dependencies():
    """Check if required dependencies are available."""
    try:
        from rapidfuzz import fuzz
        print("✓ rapidfuzz available - config key suggestions enabled")
    except ImportError:
        print("⚠ rapidfuzz not available - config key suggestions disabled")
        print("  Install with: pip install rapidfuzz")


def _load(path: str, seed_override=None):
    from business.import_export import load_config

    config = load_config(path)
    if seed_override is not None:
        if seed_override < 0:
            raise ConfigError('--seed-override', f"seed must be non-negative, got {seed_override}")
        config = config.replace_seeds([seed_override])
    return config


def cmd_run(args) -> int:
    from business.experiments import resolve_output_dir, run_experiment

    config = _load(args.config, args.seed_override)
    output_dir = resolve_output_dir(config)
    print(f"Configuration : {config.name}")
    print(f"Algorithm     : {config.algorithm} ({config.resolved_schedule} schedule)")
    print(f"Problem       : {config.problem}")
    print(f"Seeds         : {', '.join(str(s) for s in config.seeds)}")
    print(f"Output        : {output_dir}")
    print()

    try:
        report, paths = run_experiment(config, output_dir)
    except DivergenceError as e:
        print(f"✗ {e}")
        print(f"  Partial reports written to {output_dir}")
        return EXIT_DIVERGED

    print(f"{'seed':>6} {'status':>10} {'iters':>7} {'DE loss':>12} {'BC loss':>12}")
    for result in report.results:
        table = result.table
        print(f"{result.seed:>6} {result.status:>10} {result.trace.iterations:>7} "
              f"{table.de_loss_total:>12.4e} {table.bc_loss:>12.4e}")
    print()
    print(f"✓ {len(paths)} report files written")
    return EXIT_OK


def cmd_budget(args) -> int:
    from business.experiments import config_budget

    config = _load(args.config)
    budget = config_budget(config)
    solver, sato = budget['solver'], budget['sato']
    print(f"Configuration : {config.name} ({config.algorithm})")
    print()
    print("Per iteration:")
    print(f"  solver circuits : {solver['circuits_per_iteration']}")
    print(f"  solver gates    : {solver['gates_per_iteration']}")
    for name, count in solver['circuits_by_class'].items():
        print(f"    {name:<4} {count:>10} circuits x {solver['basic_gates_per_circuit'][name]} gates")
    print(f"  Sato circuits   : {sato['circuits_per_iteration']} ({sato['n_parameters']} parameters)")
    print(f"  Sato gates      : {sato['gates_per_iteration']}")
    print()
    print(f"Cumulative over {budget['assumed_iterations']} iterations:")
    print(f"  solver : {solver['total_circuits']} circuits, {solver['total_basic_gates']} gates")
    print(f"  Sato   : {sato['total_circuits']} circuits, {sato['total_basic_gates']} gates")
    print()
    print(f"Sato/solver gate ratio (full derivatives) : {budget['sato_gate_ratio_full']:.1f}")
    print(f"Sato/solver gate ratio (loss evaluation)  : {budget['sato_gate_ratio_loss_evaluation']:.1f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from business.verification import run_verification, summarize

    results = run_verification()
    for result in results:
        mark = "✓" if result.passed else "✗"
        print(f"{mark} {result.name}: {result.detail}")
    passed, total = summarize(results)
    print()
    print(f"{passed}/{total} checks passed")
    return EXIT_OK if passed == total else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description=f"{APP_NAME} {APP_VERSION}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log per-iteration detail.")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Log warnings and errors only.")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Train every seed of a configuration and write reports.")
    run.add_argument("config", help="Path to a JSON run configuration.")
    run.add_argument("--seed-override", type=int, default=None, help="Run this single seed instead.")
    run.set_defaults(handler=cmd_run)

    budget = subparsers.add_parser("budget", help="Print circuit and gate budgets without simulating.")
    budget.add_argument("config", help="Path to a JSON run configuration.")
    budget.set_defaults(handler=cmd_budget)

    verify = subparsers.add_parser("verify", help="Run the property checks.")
    verify.set_defaults(handler=cmd_verify)
    return parser


def main(argv=None) -> int:
    """Main application entry point."""
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    print("=" * 60)
    print(APP_NAME)
    print(f"Version {APP_VERSION}")
    print("=" * 60)
    print()

    check_dependencies()
    print()

    try:
        return args.handler(args)
    except ConfigError as e:
        print(f"✗ Configuration error: {e}")
        return EXIT_CONFIG
    except ReportError as e:
        print(f"✗ Report error: {e}")
        return 1
    except SolverError as e:
        print(f"✗ {type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
