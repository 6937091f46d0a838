"""infer: posterior sampling from the observable dataset, with coverage when truth is available."""
import logging
import re
from pathlib import Path

import pandas as pd

from .. import io
from ..bayes_infer import run_mcmc, summarize, swapped_chains, trace_frame
from ..diagnostics import GroundTruth, coverage_check, entropy_summary, posterior_histograms
from . import RunContext, add_config_arguments, resolve_config

logger = logging.getLogger(__name__)

TRACE_FILE = "trace.csv"
SUMMARY_FILE = "summary.csv"
COVERAGE_FILE = "coverage.csv"
COVERAGE_RATES_FILE = "coverage_rates.csv"
SAMPLER_FILE = "sampler.csv"
ENTROPY_FILE = "entropy.csv"


def histogram_filename(name: str) -> str:
    """alpha[12] -> histograms/alpha_12.csv"""
    return f"histograms/{re.sub(r'[^A-Za-z0-9]+', '_', name).strip('_')}.csv"


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("infer", help="Recover model parameters from an observable dataset")
    parser.add_argument("dataset", nargs="?", type=Path, help="Observable dataset (default: <output_dir>/dataset/observable.csv)")
    add_config_arguments(parser)
    parser.add_argument("--truth-dir", type=Path, help="Directory with truth_*.csv files (default: the dataset's directory)")
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    cfg = resolve_config(args)
    settings = cfg.inference
    dataset_path = args.dataset or Path(cfg.output_dir) / "dataset" / "observable.csv"
    truth_dir = args.truth_dir or dataset_path.parent
    with RunContext("infer", cfg, "inference") as run:
        with run.stage("load"):
            data = io.read_observable(dataset_path)
            truth_tables = io.read_truth_tables(truth_dir)

        with run.stage("sample"):
            trace = run_mcmc(data, settings.model, settings.mcmc, seed=cfg.seed, workers=cfg.workers)

        with run.stage("summarize"):
            summary = summarize(trace, settings.hdi_mass)
            run.write_table(summary, SUMMARY_FILE)
            swapped = swapped_chains(trace)
            sampler = pd.DataFrame(
                [{"quantity": f"acceptance_{k}", "value": v} for k, v in sorted(trace.acceptance.items())]
                + [{"quantity": "divergences", "value": trace.divergences},
                   {"quantity": "label_swap", "value": int(bool(swapped))}]
                + [{"quantity": f"label_swap_chain_{c}", "value": int(c in swapped)} for c in range(trace.n_chains)]
            )
            run.write_table(sampler, SAMPLER_FILE)
            entropies = entropy_summary(trace, settings.entropy)
            run.write_table(pd.DataFrame({"family": list(entropies), "mean_entropy": list(entropies.values())}), ENTROPY_FILE)
            names = [n for n in settings.histogram_parameters if n in trace.names]
            for name in sorted(set(settings.histogram_parameters) - set(names)):
                logger.warning(f"Histogram parameter '{name}' is not in the trace; skipped")
            for hist in posterior_histograms(trace, names, settings.entropy):
                run.write_with(
                    histogram_filename(hist.name),
                    lambda path, h=hist: io.write_histogram(path, h.name, h.entropy, h.edges, h.counts),
                )
            if settings.write_trace:
                run.write_table(trace_frame(trace), TRACE_FILE)

        with run.stage("coverage"):
            if truth_tables is None:
                logger.warning(f"No ground truth in {truth_dir}; coverage skipped")
            else:
                report = coverage_check(trace, GroundTruth.from_frames(*truth_tables), settings.hdi_mass)
                run.write_table(report.table, COVERAGE_FILE)
                rates = pd.DataFrame({"family": list(report.rates), "coverage": list(report.rates.values())})
                run.write_table(rates, COVERAGE_RATES_FILE)
    return 0
