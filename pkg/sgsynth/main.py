"""
Serious-game synthetic data command line.

Batch pipeline: train a Bayesian network on survey rows, generate synthetic
players answering a question environment, recover the model parameters by
MCMC and measure how well they are identified.
"""
import argparse
import logging
import sys
from typing import List, Optional

from . import __version__
from .commands import generate, infer, make_survey, report, robustness, train_bn
from .errors import SimulatorError
from .events import configure_logging

logger = logging.getLogger(__name__)

# Order is the order shown in --help
COMMANDS = [train_bn, generate, infer, robustness, report, make_survey]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgsynth", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.add_parser(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except SimulatorError as e:
        logger.error(f"{type(e).__name__}: {e.detail}")
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
