"""generate: observable dataset plus ground truth from a trained network."""
import logging
from typing import Dict, List

import pandas as pd

from .. import io
from ..errors import ConfigError
from ..population import alpha_histogram
from ..simulator import run_simulation, stratified_config
from . import RunContext, add_config_arguments, resolve_config

logger = logging.getLogger(__name__)

OBSERVABLE_FILE = "observable.csv"
POPULATION_FILE = "population.csv"
ALPHA_HISTOGRAM_FILE = "alpha_histogram.csv"


def parse_evidence(items: List[str]) -> Dict[str, str]:
    """VAR=LABEL pairs from the command line."""
    evidence = {}
    for item in items or []:
        name, sep, label = item.partition("=")
        if not sep or not name:
            raise ConfigError(f"--stratify expects VARIABLE=STATE, got '{item}'")
        evidence[name.strip()] = label.strip()
    return evidence


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("generate", help="Simulate agents answering the question environment")
    add_config_arguments(parser)
    parser.add_argument(
        "--stratify", action="append", metavar="VARIABLE=STATE",
        help="Clamp an attribute for every agent (repeatable)",
    )
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    cfg = resolve_config(args)
    evidence = parse_evidence(args.stratify)
    if evidence:
        # part of the manifest snapshot
        cfg = stratified_config(cfg, evidence)
    with RunContext("generate", cfg, "dataset") as run:
        with run.stage("simulate"):
            dataset = run_simulation(cfg)
        run.stage_seconds.update(dataset.stage_seconds)
        with run.stage("write"):
            run.write_table(dataset.observable_frame(), OBSERVABLE_FILE)
            run.write_table(dataset.truth_agents_frame(), io.TRUTH_AGENTS)
            run.write_table(dataset.truth_questions_frame(), io.TRUTH_QUESTIONS)
            run.write_table(dataset.truth_hyperparams_frame(), io.TRUTH_HYPERPARAMS)
            run.write_table(dataset.population_frame(), POPULATION_FILE)
            counts, edges = alpha_histogram(dataset.alphas)
            histogram = pd.DataFrame({"bin_lower": edges[:-1], "bin_upper": edges[1:], "count": counts})
            run.write_table(histogram, ALPHA_HISTOGRAM_FILE)
    n, q = dataset.responses.shape
    logger.info(f"Wrote {n} agents x {q} questions to {run.directory}")
    return 0
