"""Command-line front end: one subcommand per simulation mode.

    lecollapse collapse --config run.cfg --seed 7 --out runs/demo
    lecollapse sweep --config born.cfg --seeds 0..99 --formats csv,json
    lecollapse wave --trajectory ...        (collapse/sweep only flag)

Flags override the corresponding config-file keys; a missing --config
runs the mode entirely on defaults. Exit codes: 0 success, 2 config
error, 3 numerical-stability error, 4 timeout.
"""

from __future__ import annotations

import argparse
import sys
import warnings

from lecollapse.config import MODES, ConfigError, load_config
from lecollapse.engine import DegenerateStateError
from lecollapse.exact import DivergenceError
from lecollapse.runner import run_experiment
from lecollapse.wave import FrontUndefinedError, StabilityError

__all__ = ["main"]

EXIT_SUCCESS = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_TIMEOUT = 4

_MODE_BLURBS = {
    "exact": "branch evolution of a small lattice model",
    "wave": "entanglement probability front on a grid",
    "collapse": "one stochastic collapse trajectory",
    "fp": "diffusion-limit density on the probability simplex",
    "sweep": "collapse ensemble over a seed range plus statistics",
    "compare": "density solver against a matched trajectory ensemble",
}

_NUMERICAL_ERRORS = (
    StabilityError,
    FrontUndefinedError,
    DivergenceError,
    DegenerateStateError,
    FloatingPointError,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lecollapse",
        description="Desk-scale collapse-from-entanglement simulations.",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        sp = sub.add_parser(mode, help=_MODE_BLURBS[mode])
        sp.add_argument("--config", metavar="PATH",
                        help="key=value config file (defaults apply "
                             "without one)")
        sp.add_argument("--seed", type=int, metavar="N",
                        help="rng seed (single-run modes)")
        sp.add_argument("--seeds", metavar="A..B",
                        help="inclusive seed range (sweep)")
        sp.add_argument("--out", metavar="DIR",
                        help="output directory (default runs)")
        sp.add_argument("--formats", metavar="LIST",
                        help="comma list from csv,json,svg")
        sp.add_argument("--trajectory", action="store_true",
                        help="log per-step channel probabilities "
                             "(collapse, sweep)")
        sp.add_argument("--max-steps", type=int, dest="max_steps",
                        metavar="N", help="step budget per trajectory")
    return parser


def _plain_warnings() -> None:
    """One clean stderr line per warning instead of the traceback form."""

    def show(message, category, filename, lineno, file=None, line=None):
        print(f"warning: {message}", file=sys.stderr)

    warnings.showwarning = show


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _plain_warnings()

    overrides = {"mode": args.mode}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.seeds is not None:
        overrides["seeds"] = args.seeds
    if args.out is not None:
        overrides["out"] = args.out
    if args.formats is not None:
        overrides["formats"] = args.formats
    if args.trajectory:
        overrides["trajectory"] = "true"
    if args.max_steps is not None:
        overrides["max_steps"] = str(args.max_steps)

    try:
        config = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        manifest = run_experiment(config)
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    print(
        f"{config.mode}: {manifest.status}; "
        f"{len(manifest.outputs)} outputs + manifest.json in {config.out_dir}"
    )
    return EXIT_SUCCESS if manifest.status == "success" else EXIT_TIMEOUT


if __name__ == "__main__":
    raise SystemExit(main())
