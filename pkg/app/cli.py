"""
Command line entry point for experiment sweeps.

    python -m app.cli --profile desk --methods CP,RR,HR --out results/desk.csv

Profile values are defaults; any explicit flag overrides them.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from app.core.config import PROFILES, settings
from app.models.schemas import ExperimentSpec
from app.services import harness
from app.utils.helpers import parse_int_list, parse_name_list
from app.utils.logger import get_logger, setup_logging

logger = get_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m app.cli",
        description="Run privatize-then-estimate sweeps for compressive privatization and baselines.",
    )
    parser.add_argument("--profile", choices=sorted(PROFILES), default="desk",
                        help="Preset experiment scale (default: desk)")
    parser.add_argument("--k", type=int, help="Universe size")
    parser.add_argument("--m", type=int, help="Output universe size of the compressive mechanism")
    parser.add_argument("--epsilon", type=float, help="Privacy parameter")
    parser.add_argument("--sparsity", help="Target sparsity, or 'auto'")
    parser.add_argument("--dist", help="True distribution: geo:<lam>, unif:<s> or file:<path>")
    parser.add_argument("--methods", default="CP", help="Comma separated subset of CP,RR,HR,SS,RAPPOR")
    parser.add_argument("--decoders", default="project", help="Comma separated subset of project,normalize")
    parser.add_argument("--n-grid", dest="n_grid", help="Comma separated sample sizes, e.g. 1e5,2e5")
    parser.add_argument("--trials", type=int, help="Trials per grid point")
    parser.add_argument("--seed", type=int, default=0, help="Root seed (default: 0)")
    parser.add_argument("--strict-epsilon", dest="strict_epsilon", action="store_true",
                        help="Run the channel at eps - 2*beta so the guarantee is exactly eps")
    parser.add_argument("--workers", type=int, help="Worker processes (default: MAX_WORKERS)")
    parser.add_argument("--out", type=Path, help="CSV output path (JSON sidecar is written next to it)")
    parser.add_argument("--log-level", dest="log_level", default=None, help="Override LOG_LEVEL")
    return parser


def resolve_spec(args: argparse.Namespace) -> ExperimentSpec:
    """
    Merge the chosen profile with explicit flags into a validated spec.

    Raises:
        ValueError: If the merged configuration is invalid
    """
    values: Dict[str, Any] = settings.get_profile(args.profile)
    for name in ("k", "m", "epsilon", "dist", "trials", "sparsity"):
        value = getattr(args, name)
        if value is not None:
            values[name] = value
    if args.n_grid is not None:
        values["n_grid"] = parse_int_list(args.n_grid)
    values["methods"] = parse_name_list(args.methods)
    values["decoders"] = parse_name_list(args.decoders)
    values["seed"] = args.seed
    values["strict_epsilon"] = args.strict_epsilon
    return ExperimentSpec(**values)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(level=args.log_level or settings.log_level, log_file="compriv-cli.log")

    try:
        spec = resolve_spec(args)
    except (ValidationError, ValueError) as e:
        print(f"Invalid configuration: {e}", file=sys.stderr)
        return 2

    out = args.out or settings.results_dir / f"{args.profile}-seed{spec.seed}.csv"
    try:
        result = harness.run(spec, workers=args.workers)
    except (ValueError, IndexError) as e:
        logger.error(f"Experiment failed: {e}")
        return 1

    csv_path, json_path = harness.write_result(result, out)
    summary = harness.summarize(result)
    print(f"s={result.s}  rows={len(result.rows)}  csv={csv_path}  spec={json_path}")
    print(summary.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
