"""
Generation pipeline: network -> population -> question environment -> sessions.

Every random draw comes from a stream derived from the master seed and a
(stage, index) key, so adding agents never perturbs earlier agents' data.
"""
from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional

import numpy as np
import pandas as pd

from . import io
from .errors import ConfigError, InvalidInputError, PipelineStageError, SimulatorError
from .graphical_model import MISSING, BayesianNetwork, decode_row, sample_forward
from .irt_engine import UNANSWERED, Environment, ResponseDataset, build_environment, simulate_responses
from .population import AgentProfile, generate_population, population_frame
from .schemas import AppConfig, EnvironmentDefinition, MixtureHyperparams
from .seeding import ENVIRONMENT_STREAM, POPULATION_STREAM, SESSION_STREAM, SURVEY_STREAM, stream

logger = logging.getLogger(__name__)


@dataclass
class SyntheticDataset:
    """Generated agents, their answers and the ground truth behind them."""
    agents: List[AgentProfile]
    responses: ResponseDataset
    network: BayesianNetwork
    hyperparams: MixtureHyperparams
    target: str
    seed: int
    stage_seconds: Dict[str, float] = field(default_factory=dict)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([a.alpha for a in self.agents])

    @property
    def groups(self) -> np.ndarray:
        return np.array([a.group for a in self.agents])

    def _attribute_columns(self) -> List[str]:
        return [name for name in self.network.names if name != self.target]

    def observable_frame(self) -> pd.DataFrame:
        """Agent id, answers Q1..Qn (empty = unanswered) and attribute labels."""
        frame = pd.DataFrame({"agent_id": [a.id for a in self.agents]})
        for col, label in enumerate(self.responses.question_labels()):
            column = self.responses.answers[:, col]
            frame[label] = pd.array(np.where(column == UNANSWERED, pd.NA, column), dtype="Int8")
        for name in self._attribute_columns():
            states = self.network.variable(name).states
            frame[name] = [states[a.attributes[name]] for a in self.agents]
        return frame

    def truth_agents_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "agent_id": [a.id for a in self.agents],
            "group": [a.group for a in self.agents],
            "alpha": [a.alpha for a in self.agents],
            "p_risky": [a.p_risky for a in self.agents],
        })

    def truth_questions_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"question": self.responses.question_labels(), "beta": self.responses.betas})

    def truth_hyperparams_frame(self) -> pd.DataFrame:
        values = self.hyperparams.model_dump()
        return pd.DataFrame({"parameter": list(values), "value": list(values.values())})

    def population_frame(self) -> pd.DataFrame:
        return population_frame(self.agents, self.network)


@contextmanager
def pipeline_stage(name: str, timings: Dict[str, float]) -> Iterator[None]:
    """Time a stage and attach its name to any failure."""
    start = time.perf_counter()
    logger.info(f"Stage {name} started")
    try:
        yield
    except PipelineStageError:
        raise
    except (SimulatorError, ValueError, KeyError) as e:
        raise PipelineStageError(name, e)
    finally:
        timings[name] = time.perf_counter() - start
    logger.info(f"Stage {name} finished in {timings[name]:.3f}s")


def encode_evidence(net: BayesianNetwork, evidence: Mapping[str, str]) -> Dict[str, int]:
    """Label evidence -> state indices, with config-style error locations."""
    encoded = {}
    for name, label in evidence.items():
        if name not in net.names:
            raise ConfigError(f"population.evidence.{name}: not a network variable")
        try:
            encoded[name] = net.variable(name).index(label)
        except InvalidInputError as e:
            raise ConfigError(f"population.evidence.{name}: {e.detail}")
    return encoded


def environment_definition(cfg: AppConfig) -> EnvironmentDefinition:
    if cfg.environment.path is not None:
        return io.load_environment_definition(cfg.environment.path)
    return EnvironmentDefinition.model_validate(cfg.environment.model_dump(exclude={"path"}))


def run_simulation(cfg: AppConfig, net: Optional[BayesianNetwork] = None) -> SyntheticDataset:
    """
    Execute the full generation pipeline.

    Args:
        cfg: Validated configuration
        net: Preloaded network; read from ``cfg.network.path`` when omitted

    Returns:
        SyntheticDataset with observable and ground-truth views

    Raises:
        PipelineStageError: Wrapping the failing stage's error
    """
    timings: Dict[str, float] = {}
    pop = cfg.population
    with pipeline_stage("network", timings):
        if net is None:
            if cfg.network.path is None:
                raise ConfigError("network.path: a trained network file is required")
            net = io.load_network(cfg.network.path)
        net.variable(pop.target)
        net.variable(pop.target).index(pop.risky_state)
        evidence = encode_evidence(net, pop.evidence)

    with pipeline_stage("environment", timings):
        env: Environment = build_environment(environment_definition(cfg), stream(cfg.seed, ENVIRONMENT_STREAM))

    with pipeline_stage("population", timings):
        rngs = [stream(cfg.seed, POPULATION_STREAM, i + 1) for i in range(pop.n_agents)]
        agents = generate_population(
            net, pop.target, pop.risky_state, pop.n_agents, pop.hyperparams, evidence, rngs, workers=cfg.workers
        )

    with pipeline_stage("sessions", timings):
        session_rngs = [stream(cfg.seed, SESSION_STREAM, a.id) for a in agents]
        responses = simulate_responses(agents, env, session_rngs)

    logger.info(f"Simulated {responses.shape[0]} agents x {responses.shape[1]} questions")
    return SyntheticDataset(
        agents=agents, responses=responses, network=net, hyperparams=pop.hyperparams,
        target=pop.target, seed=cfg.seed, stage_seconds=timings,
    )


def stratified_config(cfg: AppConfig, evidence: Mapping[str, str]) -> AppConfig:
    """Copy of ``cfg`` with ``evidence`` (labels) merged over the configured population evidence."""
    merged = {**cfg.population.evidence, **dict(evidence)}
    return cfg.model_copy(update={"population": cfg.population.model_copy(update={"evidence": merged})})


def stratified_generate(
    cfg: AppConfig, evidence: Mapping[str, str], net: Optional[BayesianNetwork] = None
) -> SyntheticDataset:
    """Run the pipeline with attributes clamped to ``evidence`` (labels)."""
    return run_simulation(stratified_config(cfg, evidence), net=net)


def make_survey(net: BayesianNetwork, n: int, missing_fraction: float, seed: int) -> pd.DataFrame:
    """
    Synthetic survey sampled from a network, optionally with MCAR blanks.

    Returns:
        Table with one column per variable holding state labels ('' = missing)
    """
    if not 0.0 <= missing_fraction < 1.0:
        raise InvalidInputError(f"missing_fraction must lie in [0, 1), got {missing_fraction}")
    rng = stream(seed, SURVEY_STREAM)
    codes = sample_forward(net, n, rng)
    if missing_fraction > 0:
        codes[rng.random(codes.shape) < missing_fraction] = MISSING
    records = [decode_row(net.dag, row) for row in codes]
    return pd.DataFrame([{k: (v if v is not None else "") for k, v in r.items()} for r in records])
