"""Command line entry point: ``eitwalk <experiment> [options]``.

Exit status 0 on success. Failures print ``eitwalk: error[<category>]: ...``
to stderr and exit with the category's code (see ``EXIT_CODES``).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import traceback
from typing import Optional, Sequence

from .backend import CensoringError
from .config import ConfigError, ExperimentConfig, load, parse, serialize, validate, with_overrides
from .estimators import EstimationError
from .geometry import GeometryError
from .medium import ModelError
from .presets import PRESETS
from .reference_solver import SolverError

EXIT_CODES = {
    "internal": 1,
    "usage": 2,
    "config": 3,
    "model": 4,
    "estimation": 5,
    "censoring": 6,
    "solver": 7,
    "io": 8,
}

# command name -> experiment kind
COMMANDS = {
    "potential": "potential",
    "currents": "currents",
    "bias": "bias",
    "efficiency": "efficiency",
    "random-medium": "random_medium",
    "field": "field",
}


class CliError(Exception):
    def __init__(self, category: str, msg: str):
        super().__init__(msg)
        self.category = category


def _add_common(ap: argparse.ArgumentParser, default=None) -> None:
    ap.add_argument("--config", default=default, help="experiment config file (INI); default: the built-in preset")
    ap.add_argument("--seed", type=int, default=default, help="override [experiment] seed")
    ap.add_argument("--workers", type=int, default=default, help="worker processes (output does not depend on it)")
    ap.add_argument("--out", default=default, help="CSV output path (default: stdout)")
    ap.add_argument("--paths", type=int, default=default, help="override [plan] M2 (start points per electrode)")
    ap.add_argument("--no-timing", action="store_true", default=default if default is not None else False,
                    help="leave out wall/CPU times; efficiency costs are counted in walk steps")
    ap.add_argument("--backend", choices=("compiled", "python"), default=default,
                    help="walk kernel (default: best available)")
    ap.add_argument("-v", "--verbose", action="store_true", default=default if default is not None else False)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eitwalk", description="Walk-on-spheres forward solver experiments.")
    _add_common(ap)
    # options may also follow the subcommand; SUPPRESS keeps the top-level values unless given there
    common = argparse.ArgumentParser(add_help=False)
    _add_common(common, default=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command")  # optional with --config: runs the config's kind
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
    sp = sub.add_parser("show-config", parents=[common], help="print the canonical form of a config (or preset)")
    sp.add_argument("kind", nargs="?", choices=sorted(COMMANDS), help="preset to print when --config is absent")
    return ap


def resolve_config(args) -> ExperimentConfig:
    kind = COMMANDS.get(args.command) or COMMANDS.get(getattr(args, "kind", None) or "")
    if args.config:
        try:
            cfg = load(args.config)
        except OSError as e:
            raise CliError("io", f"cannot read config: {e}") from e
        if kind is not None and cfg.experiment.kind != kind:
            cfg = with_overrides(cfg, experiment__kind=kind)
    else:
        if kind is None:
            raise CliError("usage", "give --config or a preset kind")
        cfg = parse(PRESETS[kind], source=f"<preset {kind}>")
    ov = {}
    if args.seed is not None:
        ov["experiment__seed"] = args.seed
    if args.workers is not None:
        ov["experiment__workers"] = args.workers
    if args.out is not None:
        ov["experiment__output"] = args.out
    if args.paths is not None:
        ov["plan__M2"] = args.paths
    if args.no_timing:
        ov["output__timing"] = False
    if ov:
        cfg = with_overrides(cfg, **ov)
    validate(cfg, source=args.config or "<command line>")
    return cfg


def write_output(tab, path: str) -> None:
    try:
        if not path:
            sys.stdout.write(tab.to_csv())
            if tab.extras:
                logging.getLogger("eitwalk").warning("extra tables (%s) need --out", ", ".join(tab.extras))
            return
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(tab.to_csv())
        stem, ext = os.path.splitext(path)
        for name, t in tab.extras.items():
            with open(f"{stem}.{name}{ext or '.csv'}", "w", encoding="utf-8", newline="") as f:
                f.write(t.to_csv())
    except OSError as e:
        raise CliError("io", f"cannot write output: {e}") from e


def _category(e: BaseException) -> str:
    if isinstance(e, CliError):
        return e.category
    if isinstance(e, ConfigError):
        return "config"
    if isinstance(e, CensoringError):
        return "censoring"
    if isinstance(e, EstimationError):
        return "estimation"
    if isinstance(e, SolverError):
        return "solver"
    if isinstance(e, (ModelError, GeometryError, ValueError)):
        return "model"
    if isinstance(e, OSError):
        return "io"
    return "internal"


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CODES["usage"] if e.code else 0
    if args.command is None and not args.config:
        ap.print_usage(sys.stderr)
        print("eitwalk: error[usage]: give an experiment command or --config", file=sys.stderr)
        return EXIT_CODES["usage"]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "show-config":
            sys.stdout.write(serialize(cfg))
            return 0
        from .experiments import run  # deferred: keeps --help fast

        tab = run(cfg, backend=args.backend)
        write_output(tab, cfg.experiment.output)
    except Exception as e:  # noqa: BLE001 - every failure maps to an exit category
        cat = _category(e)
        print(f"eitwalk: error[{cat}]: {e}", file=sys.stderr)
        if cat == "internal" or args.verbose:
            traceback.print_exc()
        return EXIT_CODES[cat]
    return 0


if __name__ == "__main__":
    sys.exit(main())
