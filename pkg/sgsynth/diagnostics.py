"""
Identifiability and robustness analytics.

Posterior width is measured as the normalized Shannon entropy of a
histogram of the draws: 0 when every draw falls in one bin, 1 when the
draws spread evenly over all bins.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .bayes_infer import PosteriorTrace, compute_hdi, pooled, run_mcmc
from .errors import InvalidInputError, SimulatorError
from .events import log_event
from .graphical_model import BayesianNetwork
from .schemas import AppConfig, EntropyConfig, McmcConfig
from .seeding import GRID_STREAM, derive_seed
from .simulator import SyntheticDataset, run_simulation

logger = logging.getLogger(__name__)

FAMILIES = ("hyperparameters", "alpha", "beta")


def family_of(name: str) -> str:
    if name.startswith("alpha["):
        return "alpha"
    if name.startswith("beta["):
        return "beta"
    if name.startswith("group["):
        return "group"
    return "hyperparameters"


def value_range(cfg: EntropyConfig, name: str) -> Tuple[float, float]:
    """Histogram range for a parameter: beta range for betas, alpha range otherwise."""
    return tuple(cfg.beta_range) if family_of(name) == "beta" else tuple(cfg.alpha_range)


def histogram(samples: Sequence[float], bins: int, bounds: Tuple[float, float]) -> Tuple[np.ndarray, np.ndarray]:
    """Counts and edges, with out-of-range samples clamped into the edge bins."""
    x = np.clip(np.asarray(samples, dtype=float).ravel(), *bounds)
    return np.histogram(x, bins=bins, range=bounds)


def entropy_from_counts(counts: np.ndarray) -> float:
    """Shannon entropy (bits) of the counts divided by log2(len(counts))."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total == 0:
        raise InvalidInputError("cannot compute entropy of an empty histogram")
    p = counts[counts > 0] / total
    value = float(-(p * np.log2(p)).sum() / math.log2(counts.size))
    return min(max(value, 0.0), 1.0)


def normalized_entropy(samples: Sequence[float], cfg: EntropyConfig, family: str = "alpha") -> float:
    """
    Normalized entropy of a posterior sample.

    Args:
        samples: At least one draw
        cfg: Bin count and per-family ranges
        family: "beta" selects the beta range; anything else the alpha range

    Returns:
        Value in [0, 1]
    """
    bounds = tuple(cfg.beta_range) if family == "beta" else tuple(cfg.alpha_range)
    if np.asarray(samples).size < 1:
        raise InvalidInputError("need at least one sample")
    counts, _ = histogram(samples, cfg.bins, bounds)
    return entropy_from_counts(counts)


def entropy_summary(trace: PosteriorTrace, cfg: EntropyConfig) -> Dict[str, float]:
    """Mean normalized entropy over all alpha posteriors and over all beta posteriors."""
    summary = {}
    for family in ("alpha", "beta"):
        names = trace.family(family)
        values = [normalized_entropy(pooled(trace, name), cfg, family) for name in names]
        summary[family] = float(np.mean(values)) if values else math.nan
    return summary


@dataclass
class PosteriorHistogram:
    name: str
    edges: np.ndarray
    counts: np.ndarray
    entropy: float


def posterior_histograms(trace: PosteriorTrace, names: Sequence[str], cfg: EntropyConfig) -> List[PosteriorHistogram]:
    """Binned posteriors of the named parameters with their normalized entropies."""
    out = []
    for name in names:
        counts, edges = histogram(pooled(trace, name), cfg.bins, value_range(cfg, name))
        out.append(PosteriorHistogram(name=name, edges=edges, counts=counts, entropy=entropy_from_counts(counts)))
    return out


# Coverage

@dataclass
class GroundTruth:
    """True parameter values keyed by trace parameter name."""
    values: Dict[str, float]

    @classmethod
    def from_dataset(cls, dataset: SyntheticDataset) -> "GroundTruth":
        values = dict(dataset.hyperparams.model_dump())
        for agent in dataset.agents:
            values[f"alpha[{agent.id}]"] = agent.alpha
            values[f"group[{agent.id}]"] = float(agent.group)
        for j, beta in zip(dataset.responses.question_ids, dataset.responses.betas):
            values[f"beta[{j}]"] = float(beta)
        return cls(values)

    @classmethod
    def from_frames(cls, agents: pd.DataFrame, questions: pd.DataFrame, hyperparams: pd.DataFrame) -> "GroundTruth":
        values = {str(p): float(v) for p, v in zip(hyperparams["parameter"], hyperparams["value"])}
        for agent_id, alpha, group in zip(agents["agent_id"], agents["alpha"], agents["group"]):
            values[f"alpha[{int(agent_id)}]"] = float(alpha)
            values[f"group[{int(agent_id)}]"] = float(group)
        for label, beta in zip(questions["question"], questions["beta"]):
            values[f"beta[{int(str(label).lstrip('Q'))}]"] = float(beta)
        return cls(values)


@dataclass
class CoverageReport:
    table: pd.DataFrame
    rates: Dict[str, float]


def coverage_check(trace: PosteriorTrace, truth: GroundTruth, mass: float = 0.94) -> CoverageReport:
    """
    Whether each true value falls inside its posterior HDI.

    Group indicators are not checked. Coverage rates are reported per family
    (hyperparameters, alpha, beta).

    Raises:
        InvalidInputError: If the trace and the truth do not cover the same parameters
    """
    checked = [n for n in trace.names if family_of(n) != "group"]
    expected = {n for n in truth.values if family_of(n) != "group"}
    missing_truth = [n for n in checked if n not in truth.values]
    missing_trace = sorted(expected - set(checked))
    if missing_truth or missing_trace:
        raise InvalidInputError(
            f"trace and ground truth differ: no truth for {missing_truth[:5]}, not in trace {missing_trace[:5]}"
        )
    rows = []
    for name in checked:
        hdi = compute_hdi(pooled(trace, name), mass)
        value = truth.values[name]
        rows.append({
            "parameter": name, "family": family_of(name), "truth": value,
            "hdi_lower": hdi.lower, "hdi_upper": hdi.upper, "covered": hdi.contains(value),
        })
    table = pd.DataFrame(rows)
    rates = {
        family: float(table.loc[table["family"] == family, "covered"].mean())
        for family in FAMILIES if (table["family"] == family).any()
    }
    log_event("coverage", rates)
    return CoverageReport(table=table, rates=rates)


# Robustness grid

@dataclass
class CellRecord:
    agents: int
    questions: int
    repeat: int
    seed: int
    alpha_entropy: float = math.nan
    beta_entropy: float = math.nan
    status: str = "ok"
    error: Optional[str] = None
    seconds: float = 0.0


@dataclass
class GridResult:
    """Averaged normalized entropies over an agents x questions grid (NaN = invalid cell)."""
    agent_counts: List[int]
    question_counts: List[int]
    repeats: int
    alpha_entropy: np.ndarray
    beta_entropy: np.ndarray
    cells: List[CellRecord] = field(default_factory=list)

    @property
    def failed_cells(self) -> List[CellRecord]:
        return [c for c in self.cells if c.status != "ok"]

    def cell_frame(self) -> pd.DataFrame:
        """Per-run records without wall-clock times, so the table is reproducible."""
        return pd.DataFrame([vars(c) for c in self.cells]).drop(columns=["seconds"])


def cell_config(base: AppConfig, agents: int, questions: int, seed: int) -> AppConfig:
    """Base configuration resized to one grid cell: N agents, Q linear questions."""
    environment = base.environment.model_copy(update={
        "path": None, "mode": "linear", "n_questions": questions, "questions": [], "root": None,
    })
    population = base.population.model_copy(update={"n_agents": agents})
    return base.model_copy(update={"seed": seed, "environment": environment, "population": population, "workers": 1})


def run_cell(
    base: AppConfig, net: BayesianNetwork, mcmc: McmcConfig, entropy: EntropyConfig,
    agents: int, questions: int, repeat: int,
) -> CellRecord:
    """One grid experiment: fresh data, posterior sampling, mean entropies. Failures are recorded."""
    seed = derive_seed(base.seed, GRID_STREAM, agents, questions, repeat)
    record = CellRecord(agents=agents, questions=questions, repeat=repeat, seed=seed)
    start = time.perf_counter()
    try:
        dataset = run_simulation(cell_config(base, agents, questions, seed), net=net)
        trace = run_mcmc(dataset.responses, base.inference.model, mcmc.model_copy(update={"seed": None}), seed=seed)
        summary = entropy_summary(trace, entropy)
        record.alpha_entropy, record.beta_entropy = summary["alpha"], summary["beta"]
    except SimulatorError as e:
        record.status, record.error = "failed", str(e)
        logger.error(f"Grid cell N={agents} Q={questions} r={repeat} failed: {e}")
    record.seconds = time.perf_counter() - start
    log_event("grid_cell", {k: v for k, v in vars(record).items() if k != "seconds"})
    return record


def _run_cell_job(job) -> CellRecord:
    return run_cell(*job)


def robustness_grid(
    agent_counts: Sequence[int],
    question_counts: Sequence[int],
    repeats: int,
    base_cfg: AppConfig,
    net: BayesianNetwork,
    mcmc: Optional[McmcConfig] = None,
    entropy: Optional[EntropyConfig] = None,
    workers: int = 1,
) -> GridResult:
    """
    Entropy of alpha and beta posteriors across dataset sizes.

    Each (N, Q, repeat) cell uses its own seed derived from the master seed,
    so results do not depend on scheduling. Cell values average the valid
    repeats; a cell with no valid repeat is NaN.
    """
    if repeats < 1:
        raise InvalidInputError(f"repeats must be >= 1, got {repeats}")
    if not agent_counts or not question_counts or min(agent_counts) < 1 or min(question_counts) < 1:
        raise InvalidInputError("grid axes must be non-empty lists of positive counts")
    mcmc = mcmc or base_cfg.inference.mcmc
    entropy = entropy or base_cfg.robustness.entropy
    jobs = [
        (base_cfg, net, mcmc, entropy, n, q, r)
        for n in agent_counts for q in question_counts for r in range(repeats)
    ]
    logger.info(f"Robustness grid: {len(agent_counts)} x {len(question_counts)} cells, {repeats} repeats")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell_job, jobs))
    else:
        cells = [_run_cell_job(job) for job in jobs]

    alpha = np.full((len(agent_counts), len(question_counts)), np.nan)
    beta = np.full_like(alpha, np.nan)
    for a, n in enumerate(agent_counts):
        for b, q in enumerate(question_counts):
            valid = [c for c in cells if c.agents == n and c.questions == q and c.status == "ok"]
            if valid:
                alpha[a, b] = np.mean([c.alpha_entropy for c in valid])
                beta[a, b] = np.mean([c.beta_entropy for c in valid])
    return GridResult(
        agent_counts=list(agent_counts), question_counts=list(question_counts), repeats=repeats,
        alpha_entropy=alpha, beta_entropy=beta, cells=cells,
    )
