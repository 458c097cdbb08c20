"""CLI entry point for the training-design experiments."""

import argparse
import logging
import sys
from typing import List, Optional, Sequence

from src.config import EXPERIMENTS
from src.graph import build_graph

EXIT_CODES = {"READY": 0, "CONFIG_ERROR": 2, "INFEASIBLE": 3, "FAILED": 4}

# Options whose values may start with "-" (negative dB grids).
SIGNED_VALUE_OPTIONS = ("--gamma-grid",)

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="traindesign",
        description="Monte Carlo studies of application-oriented MIMO training designs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment and write its CSV")
    run.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    run.add_argument("--config", help="key = value config file applied over the preset")
    run.add_argument("--out", help="output CSV path (default: $TRAINDESIGN_OUT_DIR/<experiment>.csv)")
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--gamma-grid", help='comma-separated dB values, e.g. "-10,0,10"')
    run.add_argument("--threads", type=int)
    run.add_argument("-v", "--verbose", action="store_true", help="show library log messages at INFO")
    return parser


def normalize_argv(argv: Sequence[str]) -> List[str]:
    """Glue signed option values to their flag: `--gamma-grid -10,0` -> `--gamma-grid=-10,0`."""
    out: List[str] = []
    items = list(argv)
    i = 0
    while i < len(items):
        item = items[i]
        if item in SIGNED_VALUE_OPTIONS and i + 1 < len(items):
            out.append(f"{item}={items[i + 1]}")
            i += 2
            continue
        out.append(item)
        i += 1
    return out


def initial_state(args: argparse.Namespace) -> dict:
    overrides = {
        "seed": args.seed,
        "trials": args.trials,
        "threads": args.threads,
        "gamma_grid_db": args.gamma_grid,
    }
    return {
        "experiment": args.experiment,
        "config_path": args.config,
        "overrides": overrides,
        "out_path": args.out,
        "experiment_config": None,
        "curves": None,
        "extra_curves": None,
        "written_files": None,
        "status": None,
        "error": None,
        "run_id": None,
        "route_taken": None,
    }


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one experiment through the workflow; returns the process exit code."""
    args = build_parser().parse_args(normalize_argv(sys.argv[1:] if argv is None else argv))
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="  %(levelname)s %(name)s: %(message)s",
    )

    print("\n" + "=" * 60)
    print("  TRAINING DESIGN EXPERIMENTS")
    print("=" * 60)

    graph = build_graph()
    try:
        result = graph.invoke(initial_state(args))
    except KeyboardInterrupt:
        print("\n  Run interrupted.")
        return 130
    except Exception as e:
        logger.exception("run of %s failed", args.experiment)
        print(f"\n  ✗ Error during execution: {e}")
        return EXIT_CODES["FAILED"]
    return EXIT_CODES.get(result.get("status") or "READY", 1)


if __name__ == "__main__":
    sys.exit(main())
