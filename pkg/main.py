"""
Main entry point for the quasi-radial tree lab.
Runs one experiment per subcommand, or the acceptance suite with `verify`.
"""

import argparse
import logging
import sys
from typing import List, Optional

from src.config import constants
from src.config.config import apply_overrides, load_config, load_runner_defaults
from src.core.models import ConfigError
from src.data.results import print_acceptance_results, print_run_results
from src.simulation.acceptance import verify_acceptance
from src.simulation.experiments import run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qrtree-lab",
        description="Quasi-radial trees, limit sets and their certificates in free groups",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    for kind in constants.EXPERIMENT_KINDS:
        sub = subparsers.add_parser(kind, help=f"Run a {kind} experiment")
        sub.add_argument(
            "--config",
            default=str(constants.CONFIGS_DIR / f"{kind}.conf"),
            help="Experiment config (key=value or .json)",
        )
        sub.add_argument("--out", default=None, help="Base output folder")
        sub.add_argument("--threads", type=int, default=None, help="Worker threads")
        sub.add_argument("--budget-nodes", type=int, default=None, help="Tree node budget")
        if kind == "floyd":
            sub.add_argument(
                "--lambda", dest="lam", type=float, action="append", default=None, help="Floyd parameter (repeatable)"
            )

    verify = subparsers.add_parser("verify", help="Run the acceptance suite")
    verify.add_argument("--filter", default=None, help="Criterion numbers or name fragments, comma separated")
    verify.add_argument(
        "--expected", default=str(constants.EXPECTED_VALUES_PATH), help="Expected-values JSON file"
    )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run, print results. Exit 2 on usage errors, 1 on failed verdicts."""

    parser = build_parser()
    args = parser.parse_args(argv)

    defaults = load_runner_defaults()
    runner_config = defaults["runner_config"]
    logging.basicConfig(
        level=logging.DEBUG if runner_config.get("verbose") else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    if args.command == "verify":
        summary = verify_acceptance(filter=args.filter, expected_path=args.expected)
        print_acceptance_results(summary)
        return 1 if summary["failures"] else 0

    try:
        config = load_config(args.config)
        threads = args.threads
        if threads is None and "threads" not in config.model_fields_set:
            threads = runner_config.get("threads")
        config = apply_overrides(
            config,
            threads=threads,
            budget_nodes=args.budget_nodes,
            lam=getattr(args, "lam", None),
        )
    except ConfigError as e:
        print(f"⚠️  Invalid config: {e}", file=sys.stderr)
        return 2
    if config.kind.value != args.command:
        print(f"⚠️  Invalid config: kind: {config.kind.value} does not match '{args.command}'", file=sys.stderr)
        return 2

    print(f"🚀 Starting {config.kind.value} experiment")
    print(f"📋 Config: {args.config}")
    if defaults["folder_naming"].get("custom_folder_name") or defaults["folder_naming"].get("folder_suffix"):
        print(f"📁 Custom folder naming enabled")

    try:
        record = run(
            config,
            out_dir=args.out,
            folder_config=defaults["folder_naming"],
            write_plots=runner_config.get("write_plots", True),
        )
    except ConfigError as e:
        print(f"⚠️  Invalid config: {e}", file=sys.stderr)
        return 2

    print_run_results(record)
    return 0 if record.passed else 1


if __name__ == "__main__":
    sys.exit(main())
