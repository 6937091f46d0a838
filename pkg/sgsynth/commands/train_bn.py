"""train-bn: learn CPTs of the network structure from survey rows."""
import json
import logging

from .. import io
from ..errors import DataError
from ..graphical_model import MISSING, fit_em, fit_mle, log_likelihood, validate_network
from ..schemas import FitReport
from . import RunContext, add_config_arguments, require, resolve_config

logger = logging.getLogger(__name__)

NETWORK_FILE = "network.yaml"
REPORT_FILE = "fit_report.json"


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("train-bn", help="Learn network CPTs from a survey (MLE or EM)")
    add_config_arguments(parser)
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    cfg = resolve_config(args)
    section = cfg.network
    with RunContext("train-bn", cfg, "network") as run:
        with run.stage("load"):
            dag = io.load_structure(require(section.structure_path, "network.structure_path"))
            codes = io.read_survey(require(section.survey_path, "network.survey_path"), dag)
        missing = int((codes == MISSING).sum())
        if section.method == "mle" and missing:
            raise DataError(
                f"survey has {missing} missing cells; maximum likelihood needs complete rows, set network.method: em"
            )

        with run.stage("fit"):
            if section.method == "em":
                result = fit_em(dag, codes, max_iter=section.max_iter, tol=section.tol,
                                smoothing=section.smoothing, seed=cfg.seed)
                net, iterations, converged, loglik = result.network, result.iterations, result.converged, result.log_likelihood
            else:
                net = fit_mle(dag, codes, smoothing=section.smoothing)
                iterations, converged, loglik = 1, True, log_likelihood(net, codes)
            report = validate_network(net)
            if not report.ok:
                raise DataError(f"learned network is invalid: {'; '.join(report.violations)}")

        with run.stage("write"):
            run.write_with(NETWORK_FILE, lambda path: io.save_network(net, path, description=f"trained by {section.method}"))
            fit = FitReport(
                method=section.method, rows=int(codes.shape[0]), missing_cells=missing, smoothing=section.smoothing,
                log_likelihood=loglik, iterations=iterations, converged=converged,
            )
            run.write_with(REPORT_FILE, lambda path: path.write_text(json.dumps(fit.model_dump(), indent=2) + "\n"))
    logger.info(f"Trained network on {codes.shape[0]} rows (log-likelihood {loglik:.3f})")
    return 0
