"""Command line entry point.

Exit codes: 0 success, 1 physics or validation failure, 2 configuration error.
The worker count for the threaded right-hand side comes from
``SBTHERMO_WORKERS`` unless ``--workers`` is given.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, SBThermoError
from .plots import emit_plots
from .runner import (FAILED_MARKER, PRESETS, invariant_failures, load_config, preset_config,
                     run_scenario, scan_for)

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


def _config(args):
    if args.preset:
        if args.config:
            raise ConfigError("give either a config file or --preset, not both")
        return preset_config(args.preset)
    if not args.config:
        raise ConfigError("a config file or --preset is required")
    return load_config(args.config)


def cmd_run(args) -> int:
    config = _config(args)
    out = Path(args.output or config.directory)
    result = run_scenario(config, out, workers=args.workers)
    inv = result.invariants()
    print(f"run complete: {out} ({result.n_ados} ADOs, {result.elapsed:.1f} s)")
    if result.truncated_at is not None:
        print(f"warning: map ill-conditioned, outputs truncated at t={result.truncated_at:g}")
    failures = invariant_failures(inv)
    for line in failures:
        print(f"invariant violated: {line}")
    return EXIT_FAILURE if failures else EXIT_OK


def cmd_validate(args) -> int:
    from .validation import SUITES, validate

    suites = args.suite or SUITES
    checks = validate(suites, convention=args.convention, full=args.full)
    for check in checks:
        print(check.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_FAILURE if failed else EXIT_OK


def cmd_scan(args) -> int:
    config = _config(args)
    result = scan_for(config)
    report = result.as_dict()
    out = Path(args.output or config.directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scan.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    print(f"converged: L_max={result.max_tier} tail_terms={result.tail_terms} dt={result.dt:g}")
    if result.uncertified:
        print(f"at grid edge (not certified): {', '.join(result.uncertified)}")
    return EXIT_OK


def cmd_plots(args) -> int:
    if (Path(args.directory) / FAILED_MARKER).exists():
        print(f"note: {args.directory} carries a {FAILED_MARKER} marker", file=sys.stderr)
    for path in emit_plots(args.directory):
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sbthermo",
        description="Spin-boson thermodynamics from the hierarchical equations of motion.")
    parser.add_argument("--workers", type=int, default=None,
                        help="threads for the hierarchy right-hand side (default: $SBTHERMO_WORKERS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func, text in (("run", cmd_run, "run a scenario"),
                             ("scan", cmd_scan, "convergence scan for a scenario")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", nargs="?", help="INI config file")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("-o", "--output", help="output directory (overrides the config)")
        p.set_defaults(func=func)

    p = sub.add_parser("validate", help="oracle and invariant suites")
    p.add_argument("--suite", action="append", choices=["closed", "dephasing", "tcl2", "invariants"])
    p.add_argument("--convention", default="standard", choices=["standard", "paper-literal"])
    p.add_argument("--full", action="store_true", help="invariants on all presets at full length")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plots", help="emit plot scripts for a run directory")
    p.add_argument("directory")
    p.set_defaults(func=cmd_plots)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SBThermoError, FileNotFoundError, ValueError) as exc:
        stage = getattr(exc, "stage", "output")
        print(f"error in stage {stage}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
