#!/usr/bin/env python3
"""Main entry point for the NLKG lab."""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from config import config
from errors import CheckFailure, LabError
from lab import LabRunner
from schemas import EXPERIMENTS, ExperimentConfig

# Set up logging
logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def _floats(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> List[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _omega(text: str) -> Any:
    return text if text == "omega_c" else float(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlkg", description="Numerical lab for NLKG with inverse-square potential")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--out", dest="out_dir", help="output directory")
    parser.add_argument("--d", type=int)
    parser.add_argument("--p", type=float)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--omega", type=_omega, help="frequency or 'omega_c'")
    parser.add_argument("--rmax", type=float)
    parser.add_argument("--n", type=int)
    parser.add_argument("--t-end", dest="t_end", type=float)
    parser.add_argument("--cfl", type=float)
    parser.add_argument("--method", choices=("shoot", "minimize"))
    parser.add_argument("--index", choices=("d2", "2pm1", "0m1"))
    parser.add_argument("--lambdas", type=_floats)
    parser.add_argument("--deltas", type=_floats)
    parser.add_argument("--seeds", type=_ints)
    parser.add_argument("--omegas", type=_floats)
    parser.add_argument("--radii", type=_floats)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--seed", type=int)
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """Map CLI flags onto dotted config keys."""
    return {
        "out_dir": args.out_dir,
        "params.d": args.d,
        "params.p": args.p,
        "params.gamma": args.gamma,
        "params.omega": args.omega,
        "grid.r_max": args.rmax,
        "grid.n": args.n,
        "evolution.t_end": args.t_end,
        "evolution.cfl": args.cfl,
        "method": args.method,
        "index": args.index,
        "sweep.lambdas": args.lambdas,
        "sweep.deltas": args.deltas,
        "sweep.seeds": args.seeds,
        "sweep.omegas": args.omegas,
        "sweep.radii": args.radii,
        "workers": args.workers,
        "seed": args.seed,
    }


def main(argv: Optional[List[str]] = None) -> int:
    """Run one experiment and return the process exit code."""
    args = build_parser().parse_args(argv)
    try:
        # Validate configuration
        config.validate()
        cfg = ExperimentConfig.load(args.experiment, args.config, overrides_from_args(args))
        logger.info(f"Configuration validated: {cfg.experiment} d={cfg.params.d} p={cfg.params.p} "
                    f"gamma={cfg.params.gamma} omega={cfg.params.omega} n={cfg.grid.n}")

        report = LabRunner().run(cfg)
        if not report.passed:
            failed = [c.name for c in report.checks if c.status == "fail"]
            failed += [f"{a.name}/{c.name}" for a in report.audits for c in a.checks if c.status == "fail"]
            raise CheckFailure(f"checks failed: {', '.join(failed)}", report)
        return 0

    except LabError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except ValueError as e:
        logger.error(f"Configuration error: {e}")
        logger.error("Please check your .env file and the experiment config")
        return 2
    except KeyboardInterrupt:
        logger.info("Run stopped by user")
        return 130


if __name__ == "__main__":
    sys.exit(main())
