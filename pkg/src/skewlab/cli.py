"""Command-line runner: ``skewlab list`` and ``skewlab run CONFIG [CONFIG ...]``.

Exit status: 0 when every assertion passes, 2 on an assertion failure, 3 on
a numerical error such as blow-up or an under-resolved grid, 4 on a config
error.  With several configs the largest status wins.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .circle_reduction import DegenerateMaximumError, LiftAmbiguityError
from .forcing import ForcingConfigError, InsufficientDataError
from .pde_core import BlowUpError, ResolutionError
from .scenarios import DEFAULTS, ConfigError, list_scenarios, load_config, resolve_config, run_scenario
from .skew_product import InsufficientReturnsError
from .zero_number import NumericallyZeroError, UnresolvedZeroError

EXIT_OK, EXIT_ASSERT, EXIT_NUMERIC, EXIT_CONFIG = 0, 2, 3, 4

NUMERIC_ERRORS = (BlowUpError, ResolutionError, NumericallyZeroError, UnresolvedZeroError,
                  DegenerateMaximumError, LiftAmbiguityError, InsufficientReturnsError,
                  InsufficientDataError, FloatingPointError)

log = logging.getLogger("skewlab")


def _load(target: str, seed):
    """A config file, or the bare name of a preset scenario."""
    if not Path(target).exists() and target in DEFAULTS:
        return resolve_config({"scenario": target}, seed)
    return load_config(target, seed)


def run_one(target: str, output: str | None, seed: int | None, plots: bool) -> tuple[int, str]:
    try:
        cfg = _load(target, seed)
        if plots:
            cfg["plots"] = True
        out = Path(output) if output else Path("out")
        out = out / (Path(target).stem if Path(target).exists() else target)
        result = run_scenario(cfg, out)
    except (ConfigError, ForcingConfigError) as exc:
        return EXIT_CONFIG, f"{target}: config error: {exc}"
    except NUMERIC_ERRORS as exc:
        return EXIT_NUMERIC, f"{target}: numerical error: {exc}"
    lines = [f"{target}: {'pass' if result.passed else 'FAIL'} ({out})"]
    for a in result.assertions:
        lines.append(f"  [{'pass' if a.passed else 'FAIL'}] {a.name}: {a.detail}")
    return (EXIT_OK if result.passed else EXIT_ASSERT), "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skewlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="print the scenario catalog")
    run = sub.add_parser("run", help="run one or more scenario configs")
    run.add_argument("configs", nargs="+", metavar="CONFIG",
                     help="JSON config file, or a preset scenario name")
    run.add_argument("--output", "-o", default=None, help="output directory (default: out)")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--jobs", "-j", type=int, default=1, help="scenarios to run in parallel")
    run.add_argument("--plots", action="store_true", help="also write PNG figures")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "list":
        for name, desc, anchor in list_scenarios():
            print(f"{name:34s} {desc}  [{anchor}]")
        return EXIT_OK
    if args.jobs < 1:
        print("--jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and args.seed < 0:
        print("--seed must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    jobs = [(c, args.output, args.seed, args.plots) for c in args.configs]
    if args.jobs == 1 or len(jobs) == 1:
        results = [run_one(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_one, *zip(*jobs)))
    for code, text in results:
        print(text, file=sys.stderr if code in (EXIT_NUMERIC, EXIT_CONFIG) else sys.stdout)
    return max(code for code, _ in results)


if __name__ == "__main__":
    sys.exit(main())
