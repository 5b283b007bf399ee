import argparse
import json
import os
import sys
from importlib.metadata import version
from typing import List, Optional

from efimov_kit.config import RunConfig, resolve_cache_dir
from efimov_kit.efimov.batch import EfimovJob
from efimov_kit.errors import EfimovKitError
from efimov_kit.three_body.batch import BandsJob, CountJob
from efimov_kit.two_body.batch import ResonanceJob, TwoBodyJob


def get_version() -> str:
    try:
        return version("efimov-kit")
    except Exception:
        return "unknown"


def add_common_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "-c", "--config",
        required=True,
        help="Path to the JSON run configuration",
    )
    parser.add_argument(
        "-o", "--out",
        help="Output directory (default: output_dir from the config)",
    )
    parser.add_argument(
        "--cache",
        help="Cache directory for branch tables (default: $EFIMOV_KIT_CACHE or the config)",
    )
    parser.add_argument(
        "--threads",
        type=int,
        help="Maximum number of worker threads (default: CPU count)",
    )
    parser.add_argument(
        "--log-file",
        help="Path to log file",
    )
    parser.add_argument(
        "--verbose",
        action="store_true",
        help="Debug logging and progress bars",
    )


def get_arg() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Spectral analysis of three-particle lattice Hamiltonians with zero-range pair potentials.",
    )
    parser.add_argument(
        "-v", "--version",
        action="version",
        version=get_version(),
        help="Show program's version number and exit",
    )

    subparsers = parser.add_subparsers(
        dest="command",
        metavar="<command>",
    )

    commands = {
        "resonance": "Lattice constant, resonance couplings and expansion slopes",
        "two-body": "Two-body band edges, bound states and determinant signs",
        "bands": "Essential spectrum of the three-body fibres",
        "count": "Eigenvalue counts below the essential spectrum",
        "efimov": "Asymptotic constant U_0 by three independent routes",
    }
    for name, help_text in commands.items():
        add_common_args(subparsers.add_parser(name, help=help_text))

    subparsers.add_parser(
        "schema",
        help="Print the JSON schema of the run configuration",
    )

    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.load(args.config)
    return config.with_overrides(
        output_dir=args.out,
        cache_dir=resolve_cache_dir(args.cache, config, os.environ),
        threads=args.threads,
    )


def _run(job_class):
    def handler(args: argparse.Namespace) -> None:
        job = job_class(
            load_config(args),
            log_file=args.log_file,
            verbose=args.verbose,
        )
        job.run()

    return handler


run_resonance = _run(ResonanceJob)
run_two_body = _run(TwoBodyJob)
run_bands = _run(BandsJob)
run_count = _run(CountJob)
run_efimov = _run(EfimovJob)


def run_schema(args: argparse.Namespace) -> None:
    print(json.dumps(RunConfig.schema(), indent=2, sort_keys=True))


def main(argv: Optional[List[str]] = None) -> None:
    parser = get_arg()
    args = parser.parse_args(argv)

    if args.command is None:
        parser.print_help(sys.stderr)
        sys.exit(1)

    handlers = {
        "resonance": run_resonance,
        "two-body": run_two_body,
        "bands": run_bands,
        "count": run_count,
        "efimov": run_efimov,
        "schema": run_schema,
    }

    try:
        handlers[args.command](args)
    except EfimovKitError as e:
        print(f"Error ({type(e).__name__}): {e}", file=sys.stderr)
        sys.exit(e.exit_code)
    except Exception as e:
        print(f"Critical Error: {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
