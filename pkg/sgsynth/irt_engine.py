"""
Agents answering questions.

Response probability p = 1 / (1 + exp(-alpha * beta)): alpha is the agent's
latent risk profile, beta in [0, 1] the question's discrimination. Answer 1
is the option implying the highest risk propensity.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import networkx as nx
import numpy as np
from scipy.special import expit

from .errors import ConfigError, InvalidInputError
from .population import AgentProfile
from .schemas import EnvironmentDefinition

logger = logging.getLogger(__name__)

UNANSWERED = -1

ArrayLike = Union[float, np.ndarray]


def response_probability(alpha: ArrayLike, beta: ArrayLike) -> ArrayLike:
    """
    Probability of choosing the risk-prone option.

    Works elementwise on arrays. p(0, beta) = p(alpha, 0) = 0.5 exactly and
    p(alpha, beta) + p(-alpha, beta) = 1.

    Raises:
        InvalidInputError: If beta lies outside [0, 1] or alpha is not finite
    """
    beta_arr = np.asarray(beta, dtype=float)
    alpha_arr = np.asarray(alpha, dtype=float)
    if np.any((beta_arr < 0.0) | (beta_arr > 1.0)) or np.any(np.isnan(beta_arr)):
        raise InvalidInputError(f"beta must lie in [0, 1], got {beta}")
    if not np.all(np.isfinite(alpha_arr)):
        raise InvalidInputError(f"alpha must be finite, got {alpha}")
    p = expit(alpha_arr * beta_arr)
    return float(p) if p.ndim == 0 else p


def answer(alpha: float, beta: float, rng: np.random.Generator) -> int:
    """Bernoulli answer draw for one agent and one question."""
    return int(rng.random() < response_probability(alpha, beta))


def sample_betas(q: int, shape_a: float, shape_b: float, rng: np.random.Generator) -> np.ndarray:
    """Draw ``q`` discrimination parameters from Beta(shape_a, shape_b)."""
    if q < 1:
        raise InvalidInputError(f"q must be >= 1, got {q}")
    if not (shape_a > 0 and shape_b > 0):
        raise InvalidInputError("Beta shape parameters must be positive")
    return rng.beta(shape_a, shape_b, size=q)


def response_surface(alphas: Sequence[float], betas: Sequence[float]) -> np.ndarray:
    """Response probabilities on an (alpha, beta) grid; rows follow ``alphas``."""
    return response_probability(np.asarray(alphas, dtype=float)[:, None], np.asarray(betas, dtype=float)[None, :])


@dataclass(frozen=True)
class Question:
    """Question node; ``branch_map`` sends an answer value to the next question id."""
    id: int
    beta: float
    branch_map: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidInputError(f"question {self.id}: beta must lie in [0, 1], got {self.beta}")


@dataclass(frozen=True)
class Environment:
    """Ordered questions, visited linearly or along a branching tree."""
    questions: tuple
    mode: str = "linear"
    root: Optional[int] = None

    def __post_init__(self):
        ids = [q.id for q in self.questions]
        if len(set(ids)) != len(ids):
            raise ConfigError("question ids must be unique")
        if not ids:
            raise ConfigError("environment has no questions")
        if self.mode == "tree":
            self._check_tree(set(ids))
        elif self.mode != "linear":
            raise ConfigError(f"unknown environment mode '{self.mode}'")

    def _check_tree(self, ids: set) -> None:
        if self.root not in ids:
            raise ConfigError(f"tree root {self.root} is not a question id")
        graph = nx.DiGraph()
        graph.add_nodes_from(ids)
        for q in self.questions:
            for value, target in q.branch_map.items():
                if target not in ids:
                    raise ConfigError(f"question {q.id} branches on answer {value} to unknown question {target}")
                graph.add_edge(q.id, target)
        if not nx.is_directed_acyclic_graph(graph):
            raise ConfigError("question tree has a cycle")
        if graph.in_degree(self.root) != 0:
            raise ConfigError(f"tree root {self.root} has incoming branches")
        unreachable = ids - nx.descendants(graph, self.root) - {self.root}
        if unreachable:
            raise ConfigError(f"question(s) {sorted(unreachable)} unreachable from tree root {self.root}")

    @property
    def question_ids(self) -> List[int]:
        return [q.id for q in self.questions]

    @property
    def betas(self) -> np.ndarray:
        return np.array([q.beta for q in self.questions])

    def question(self, question_id: int) -> Question:
        return self.questions[self.question_ids.index(question_id)]


def build_environment(definition: EnvironmentDefinition, rng: np.random.Generator) -> Environment:
    """
    Turn an environment definition into an Environment.

    Fixed betas are kept; missing ones are drawn from the definition's Beta
    prior in question order.
    """
    prior = definition.beta_prior
    if definition.questions:
        drawn = sample_betas(len(definition.questions), prior.a, prior.b, rng)
        questions = tuple(
            Question(id=q.id, beta=float(q.beta) if q.beta is not None else float(b), branch_map=dict(q.branches))
            for q, b in zip(definition.questions, drawn)
        )
    else:
        betas = sample_betas(definition.n_questions, prior.a, prior.b, rng)
        questions = tuple(Question(id=j + 1, beta=float(b)) for j, b in enumerate(betas))
    return Environment(questions=questions, mode=definition.mode, root=definition.root)


def simulate_session(agent: AgentProfile, env: Environment, rng: np.random.Generator) -> np.ndarray:
    """
    One agent playing the environment with its stored alpha.

    Linear mode answers every question in order. Tree mode walks from the root
    following each question's branch map until a question without a branch for
    the given answer; unvisited questions stay UNANSWERED.

    Returns:
        Row of answers aligned with ``env.questions``
    """
    alpha = float(agent.alpha)
    row = np.full(len(env.questions), UNANSWERED, dtype=np.int8)
    if env.mode == "linear":
        probs = response_probability(np.full(len(env.questions), alpha), env.betas)
        row[:] = (rng.random(len(env.questions)) < probs).astype(np.int8)
        return row
    ids = env.question_ids
    current: Optional[int] = env.root
    while current is not None:
        question = env.question(current)
        value = answer(alpha, question.beta, rng)
        row[ids.index(current)] = value
        current = question.branch_map.get(value)
    return row


@dataclass
class ResponseDataset:
    """N x Q answers (0, 1 or UNANSWERED) with the betas that generated them (None when read back)."""
    answers: np.ndarray
    agent_ids: List[int]
    question_ids: List[int]
    betas: Optional[np.ndarray]

    @property
    def shape(self):
        return self.answers.shape

    def question_labels(self) -> List[str]:
        return [f"Q{j}" for j in self.question_ids]


def simulate_responses(agents: Sequence[AgentProfile], env: Environment, rngs) -> ResponseDataset:
    """Run one session per agent, each with its own generator from ``rngs``."""
    rows = [simulate_session(agent, env, rng) for agent, rng in zip(agents, rngs)]
    answers = np.vstack(rows) if rows else np.zeros((0, len(env.questions)), dtype=np.int8)
    return ResponseDataset(
        answers=answers, agent_ids=[a.id for a in agents], question_ids=env.question_ids, betas=env.betas
    )
