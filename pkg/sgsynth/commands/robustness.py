"""robustness: entropy heatmaps over an agents x questions grid."""
import logging

from .. import io
from ..diagnostics import robustness_grid
from ..errors import ConfigError, PartialGridError
from . import RunContext, add_config_arguments, require, resolve_config

logger = logging.getLogger(__name__)

ALPHA_HEATMAP_FILE = "alpha_entropy.csv"
BETA_HEATMAP_FILE = "beta_entropy.csv"
CELLS_FILE = "cells.csv"


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("robustness", help="Posterior entropy across dataset sizes")
    add_config_arguments(parser)
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    cfg = resolve_config(args)
    section = cfg.robustness
    try:
        agents, questions, repeats = section.axes()
    except ValueError as e:
        raise ConfigError(f"robustness: {e}") from e
    with RunContext("robustness", cfg, "robustness") as run:
        with run.stage("load"):
            net = io.load_network(require(cfg.network.path, "network.path"))
        with run.stage("grid"):
            grid = robustness_grid(
                agents, questions, repeats, cfg, net,
                mcmc=section.mcmc or cfg.inference.mcmc, entropy=section.entropy, workers=cfg.workers,
            )
        with run.stage("write"):
            run.write_table(io.heatmap_frame(grid.alpha_entropy, agents, questions), ALPHA_HEATMAP_FILE)
            run.write_table(io.heatmap_frame(grid.beta_entropy, agents, questions), BETA_HEATMAP_FILE)
            run.write_table(grid.cell_frame(), CELLS_FILE)
        if grid.failed_cells:
            run.status = "partial"
    if grid.failed_cells:
        raise PartialGridError(f"{len(grid.failed_cells)} of {len(grid.cells)} grid runs failed; see {CELLS_FILE}")
    return 0
