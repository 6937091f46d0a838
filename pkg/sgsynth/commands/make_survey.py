"""make-survey: sample a synthetic survey from a trained network."""
import logging

from .. import io
from ..simulator import make_survey
from . import RunContext, add_config_arguments, require, resolve_config

logger = logging.getLogger(__name__)

SURVEY_FILE = "survey.csv"
DEFAULT_ROWS = 665


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("make-survey", help="Sample survey rows from a network")
    add_config_arguments(parser)
    parser.add_argument("--rows", type=int, default=DEFAULT_ROWS, help=f"Number of rows (default: {DEFAULT_ROWS})")
    parser.add_argument("--missing-fraction", type=float, default=0.0, help="Share of cells blanked at random")
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    cfg = resolve_config(args)
    with RunContext("make-survey", cfg, "survey") as run:
        with run.stage("sample"):
            net = io.load_network(require(cfg.network.path, "network.path"))
            survey = make_survey(net, args.rows, args.missing_fraction, cfg.seed)
        with run.stage("write"):
            run.write_table(survey, SURVEY_FILE)
    logger.info(f"Wrote {len(survey)} survey rows")
    return 0
