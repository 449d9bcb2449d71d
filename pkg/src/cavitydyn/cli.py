"""Command-line entry point: ``cavitydyn run|validate|surfaces <config>``."""

from __future__ import annotations

import argparse
import logging
import sys

from .scenarios import ConfigError, ScenarioRuntimeError, run_scenario, validate_config

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


def build_parser():
    ap = argparse.ArgumentParser(prog="cavitydyn", description="Cavity-dressed wave-packet dynamics")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, hlp in (("run", "run a scenario and write all outputs"),
                      ("validate", "check a config without running dynamics"),
                      ("surfaces", "write dressed surfaces and couplings only")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("config")
        p.add_argument("--output-dir", default=None)
        p.add_argument("--mode", choices=("simplified", "full"), default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "validate":
        overrides = {("propagation", "mode"): args.mode} if args.mode else None
        rep = validate_config(args.config, overrides)
        print(rep)
        return EXIT_OK if rep.ok else EXIT_VALIDATION
    try:
        meta, files = run_scenario(args.config, output_dir=args.output_dir, mode=args.mode, seed=args.seed,
                                   surfaces_only=args.command == "surfaces")
    except ConfigError as err:
        print(f"validation error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except ScenarioRuntimeError as err:
        print(f"runtime error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    for w in meta.get("warnings", []):
        print(f"warning: {w}", file=sys.stderr)
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
