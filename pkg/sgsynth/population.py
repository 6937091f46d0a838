"""
Synthetic agent population.

Each agent gets a synthetic attribute record sampled from the network, the
probability of belonging to the risky group given those attributes, a group
drawn from that probability, and a latent risk profile alpha drawn from the
group's Gaussian.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .errors import InvalidInputError
from .graphical_model import BayesianNetwork, Observation, query, sample_conditional
from .schemas import MixtureHyperparams

logger = logging.getLogger(__name__)

SAFE = 0
RISKY = 1


@dataclass(frozen=True)
class AgentProfile:
    """One synthetic player."""
    id: int
    group: int
    alpha: float
    p_risky: float
    attributes: Dict[str, int]


def assign_group(p_risky: float, rng: np.random.Generator) -> int:
    """Bernoulli(p_risky) draw: RISKY (1) or SAFE (0)."""
    if not 0.0 <= p_risky <= 1.0:
        raise InvalidInputError(f"p_risky must lie in [0, 1], got {p_risky}")
    return RISKY if rng.random() < p_risky else SAFE


def sample_alpha(group: int, hp: MixtureHyperparams, rng: np.random.Generator) -> float:
    """Draw alpha from the group's Gaussian."""
    if group == RISKY:
        return float(rng.normal(hp.mu_risky, hp.sigma_risky))
    if group == SAFE:
        return float(rng.normal(hp.mu_safe, hp.sigma_safe))
    raise InvalidInputError(f"group must be 0 or 1, got {group}")


def risky_probability(net: BayesianNetwork, target: str, risky_index: int, attributes: Observation) -> float:
    """P(target = risky | every other attribute), by exact query."""
    evidence = {name: state for name, state in attributes.items() if name != target}
    return float(query(net, target, evidence)[risky_index])


def make_agent(
    agent_id: int,
    net: BayesianNetwork,
    target: str,
    risky_index: int,
    hp: MixtureHyperparams,
    evidence: Observation,
    rng: np.random.Generator,
) -> AgentProfile:
    """Generate one agent from its own random stream."""
    codes = sample_conditional(net, evidence, rng)
    attributes = {name: int(code) for name, code in zip(net.names, codes) if name != target}
    p_risky = risky_probability(net, target, risky_index, attributes)
    group = assign_group(p_risky, rng)
    alpha = sample_alpha(group, hp, rng)
    return AgentProfile(id=agent_id, group=group, alpha=alpha, p_risky=p_risky, attributes=attributes)


def generate_population(
    net: BayesianNetwork,
    target: str,
    risky_state: str,
    n: int,
    hp: MixtureHyperparams,
    evidence: Optional[Observation],
    rngs: Sequence[np.random.Generator],
    workers: int = 1,
) -> List[AgentProfile]:
    """
    Generate ``n`` agents, the i-th using ``rngs[i]``.

    The target's own sampled value is discarded: the group is drawn from
    p_risky, which is computed by conditioning on the agent's sampled
    attributes. Evidence clamps attributes (stratified generation).

    Args:
        net: Trained network
        target: Variable of interest
        risky_state: Label of the target state that defines the risky group
        n: Number of agents
        hp: Gaussian parameters of the two groups
        evidence: Clamped attribute states (may be empty)
        rngs: One generator per agent
        workers: Thread count; agents are independent given their streams

    Raises:
        InvalidInputError: If the target is in the evidence or labels are unknown
        ImpossibleEvidenceError: If the evidence has zero probability
    """
    evidence = dict(evidence or {})
    if target in evidence:
        raise InvalidInputError(f"target '{target}' cannot be part of the evidence")
    risky_index = net.variable(target).index(risky_state)
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    if len(rngs) < n:
        raise InvalidInputError(f"need {n} random streams, got {len(rngs)}")

    def build(i: int) -> AgentProfile:
        return make_agent(i + 1, net, target, risky_index, hp, evidence, rngs[i])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            agents = list(pool.map(build, range(n)))
    else:
        agents = [build(i) for i in range(n)]
    risky_share = sum(a.group for a in agents) / n
    logger.info(f"Generated {n} agents (risky share {risky_share:.3f})")
    return agents


def population_frame(agents: Sequence[AgentProfile], net: BayesianNetwork) -> pd.DataFrame:
    """One row per agent: id, group, alpha, p_risky, then attribute labels."""
    rows = []
    for agent in agents:
        row = {"id": agent.id, "group": agent.group, "alpha": agent.alpha, "p_risky": agent.p_risky}
        for name, state in agent.attributes.items():
            row[name] = net.variable(name).states[state]
        rows.append(row)
    return pd.DataFrame(rows)


def alpha_histogram(alphas: Sequence[float], bins: int = 40, value_range: Tuple[float, float] = (-6.0, 6.0)):
    """Counts and bin edges of the profile histogram."""
    counts, edges = np.histogram(np.clip(alphas, *value_range), bins=bins, range=value_range)
    return counts, edges


@dataclass
class MixtureFit:
    """Two-component Gaussian mixture fitted to profiles (safe = lower mean)."""
    hyperparams: MixtureHyperparams
    risky_weight: float
    log_likelihood: float
    iterations: int


def fit_alpha_mixture(alphas: Sequence[float], max_iter: int = 500, tol: float = 1e-8) -> MixtureFit:
    """
    Fit a two-component 1-D Gaussian mixture by EM.

    Components start at the lower and upper quartiles; the component with the
    lower mean is reported as the safe group.
    """
    x = np.asarray(alphas, dtype=float)
    if x.size < 2:
        raise InvalidInputError("need at least two profiles to fit a mixture")
    means = np.quantile(x, [0.25, 0.75])
    sds = np.full(2, max(float(x.std()), 1e-3))
    weights = np.array([0.5, 0.5])
    previous = -math.inf
    loglik = previous
    iteration = 0
    for iteration in range(1, max_iter + 1):
        log_dens = np.log(weights)[None, :] + stats.norm.logpdf(x[:, None], means[None, :], sds[None, :])
        log_norm = np.logaddexp(log_dens[:, 0], log_dens[:, 1])
        loglik = float(log_norm.sum())
        resp = np.exp(log_dens - log_norm[:, None])
        mass = resp.sum(axis=0)
        weights = mass / x.size
        means = (resp * x[:, None]).sum(axis=0) / mass
        sds = np.sqrt((resp * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / mass)
        sds = np.maximum(sds, 1e-6)
        if abs(loglik - previous) < tol:
            break
        previous = loglik
    safe, risky = (0, 1) if means[0] <= means[1] else (1, 0)
    hp = MixtureHyperparams(
        mu_safe=float(means[safe]), sigma_safe=float(sds[safe]),
        mu_risky=float(means[risky]), sigma_risky=float(sds[risky]),
    )
    return MixtureFit(hyperparams=hp, risky_weight=float(weights[risky]), log_likelihood=loglik, iterations=iteration)
