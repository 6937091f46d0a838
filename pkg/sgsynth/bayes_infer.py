"""
Metropolis-within-Gibbs sampler for the hierarchical mixture model.

Model, for agents i and questions j:

    mu_safe ~ Normal(m_s, s_s)        mu_risky ~ Normal(m_r, s_r)
    sigma_safe, sigma_risky ~ Exponential(rate)
    G_i ~ Bernoulli(group_prior)
    alpha_i ~ Normal(mu_{G_i}, sigma_{G_i})
    beta_j ~ Beta(a, b)
    y_ij ~ Bernoulli(expit(alpha_i * beta_j))       (unanswered cells are skipped)

A sweep updates, in order: every G_i exactly from its discrete full
conditional, every alpha_i by random-walk Metropolis, every beta_j by
random-walk Metropolis on its logit, the two mus by their conjugate Normal
updates and the two sigmas by random-walk Metropolis on their logs. Step
sizes are adapted per parameter during burn-in only.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import expit, log_expit, logit

from .errors import InvalidInputError, NumericalFailureError
from .events import log_event
from .irt_engine import UNANSWERED, ResponseDataset
from .schemas import HierarchicalModelSpec, McmcConfig
from .seeding import CHAIN_STREAM, stream

logger = logging.getLogger(__name__)

HYPERPARAMETERS = ("mu_safe", "sigma_safe", "mu_risky", "sigma_risky")

ADAPT_SHRINK = 0.7
ADAPT_GROW = 1.3


@dataclass
class ModelState:
    """One full parameter assignment."""
    mu_safe: float
    sigma_safe: float
    mu_risky: float
    sigma_risky: float
    alpha: np.ndarray
    group: np.ndarray
    beta: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([
            [self.mu_safe, self.sigma_safe, self.mu_risky, self.sigma_risky],
            self.alpha, self.group.astype(float), self.beta,
        ])

    def group_params(self):
        """(means, sds) of each agent's current group."""
        risky = self.group == 1
        return (np.where(risky, self.mu_risky, self.mu_safe), np.where(risky, self.sigma_risky, self.sigma_safe))


def parameter_names(agent_ids: Sequence[int], question_ids: Sequence[int]) -> List[str]:
    """Scalar parameter names in trace column order."""
    return (
        list(HYPERPARAMETERS)
        + [f"alpha[{i}]" for i in agent_ids]
        + [f"group[{i}]" for i in agent_ids]
        + [f"beta[{j}]" for j in question_ids]
    )


def _as_answers(data: Union[ResponseDataset, np.ndarray]) -> np.ndarray:
    answers = np.asarray(data.answers if isinstance(data, ResponseDataset) else data)
    if answers.ndim != 2:
        raise InvalidInputError(f"response matrix must be 2-D, got shape {answers.shape}")
    bad = ~np.isin(answers, (0, 1, UNANSWERED))
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise InvalidInputError(f"response cell ({row + 1}, {col + 1}) is {answers[row, col]}; expected 0, 1 or unanswered")
    return answers.astype(np.int8)


def _cell_loglik(x: np.ndarray, y: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return mask * (y * log_expit(x) + (1.0 - y) * log_expit(-x))


def log_likelihood(alpha: np.ndarray, beta: np.ndarray, answers: np.ndarray) -> float:
    """Sum of Bernoulli log-probabilities over answered cells."""
    answers = np.asarray(answers)
    y = (answers == 1).astype(float)
    mask = (answers != UNANSWERED).astype(float)
    x = np.asarray(alpha, dtype=float)[:, None] * np.asarray(beta, dtype=float)[None, :]
    return float(_cell_loglik(x, y, mask).sum())


def log_prior(state: ModelState, spec: HierarchicalModelSpec) -> float:
    means, sds = state.group_params()
    groups = state.group.astype(float)
    total = (
        stats.norm.logpdf(state.mu_safe, spec.mu_safe_mean, spec.mu_safe_sd)
        + stats.norm.logpdf(state.mu_risky, spec.mu_risky_mean, spec.mu_risky_sd)
        + stats.expon.logpdf(state.sigma_safe, scale=1.0 / spec.sigma_rate)
        + stats.expon.logpdf(state.sigma_risky, scale=1.0 / spec.sigma_rate)
        + np.sum(groups * math.log(spec.group_prior) + (1.0 - groups) * math.log1p(-spec.group_prior))
        + np.sum(stats.norm.logpdf(state.alpha, means, sds))
        + np.sum(stats.beta.logpdf(state.beta, spec.beta_a, spec.beta_b))
    )
    return float(total)


def in_support(state: ModelState) -> bool:
    return bool(
        state.sigma_safe > 0
        and state.sigma_risky > 0
        and np.all((state.beta >= 0) & (state.beta <= 1))
        and np.all(np.isin(state.group, (0, 1)))
        and np.all(np.isfinite(state.alpha))
        and math.isfinite(state.mu_safe)
        and math.isfinite(state.mu_risky)
    )


def log_posterior(state: ModelState, data: Union[ResponseDataset, np.ndarray], spec: HierarchicalModelSpec) -> float:
    """
    Unnormalized log posterior: log prior + log likelihood.

    Returns:
        -inf for states outside the support instead of raising
    """
    if not in_support(state):
        return -math.inf
    with np.errstate(divide="ignore"):
        value = log_prior(state, spec) + log_likelihood(state.alpha, state.beta, _as_answers(data))
    return value if not math.isnan(value) else -math.inf


def group_probability(alpha: np.ndarray, state: ModelState, spec: HierarchicalModelSpec) -> np.ndarray:
    """P(G_i = 1 | alpha_i, hyperparameters) for every agent."""
    log_odds = (
        math.log(spec.group_prior) - math.log1p(-spec.group_prior)
        + stats.norm.logpdf(alpha, state.mu_risky, state.sigma_risky)
        - stats.norm.logpdf(alpha, state.mu_safe, state.sigma_safe)
    )
    return expit(log_odds)


def gibbs_update_groups(state: ModelState, spec: HierarchicalModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Exact draw of every G_i from its Bernoulli full conditional."""
    p = group_probability(state.alpha, state, spec)
    return (rng.random(p.shape) < p).astype(np.int64)


def initial_state(answers: np.ndarray, spec: HierarchicalModelSpec, rng: np.random.Generator) -> ModelState:
    """
    Dispersed starting point.

    Hyperparameters are drawn around the prior means. With answers present,
    each alpha starts near a crude estimate from the agent's share of
    risk-prone answers and the agent joins the component with the nearer
    mean, mu_safe starting below mu_risky. Without answers the alphas are
    drawn from the starting mixture.
    """
    n_agents, n_questions = answers.shape
    mu_safe, mu_risky = np.sort(np.array([spec.mu_safe_mean, spec.mu_risky_mean]) + rng.normal(0.0, 0.5, size=2))
    sigma_safe, sigma_risky = np.exp(rng.normal(0.0, 0.3, size=2))
    state = ModelState(
        mu_safe=float(mu_safe), sigma_safe=float(sigma_safe),
        mu_risky=float(mu_risky), sigma_risky=float(sigma_risky),
        alpha=np.zeros(n_agents), group=np.zeros(n_agents, dtype=np.int64),
        beta=rng.uniform(0.2, 0.8, size=n_questions),
    )
    answered = (answers != UNANSWERED).sum(axis=1)
    if n_questions == 0 or not answered.any():
        state.group = (rng.random(n_agents) < spec.group_prior).astype(np.int64)
        means, sds = state.group_params()
        state.alpha = rng.normal(means, sds)
        return state
    share = ((answers == 1).sum(axis=1) + 0.5) / (answered + 1.0)
    # p = expit(alpha * beta) with beta near 0.5 on average
    state.alpha = np.clip(2.0 * logit(share), -6.0, 6.0) + rng.normal(0.0, 0.3, size=n_agents)
    state.group = (state.alpha > 0.5 * (state.mu_safe + state.mu_risky)).astype(np.int64)
    return state


@dataclass
class ChainResult:
    draws: np.ndarray
    acceptance: Dict[str, float]
    divergences: int
    step_sizes: Dict[str, float]


class ChainSampler:
    """One Markov chain over the full parameter vector."""

    def __init__(self, answers: np.ndarray, spec: HierarchicalModelSpec, cfg: McmcConfig, rng: np.random.Generator):
        self.spec = spec
        self.cfg = cfg
        self.rng = rng
        self.y = (answers == 1).astype(float)
        self.mask = (answers != UNANSWERED).astype(float)
        n, q = answers.shape
        self.state = initial_state(answers, spec, rng)
        self.steps = {
            "alpha": np.full(n, cfg.alpha_step),
            "beta": np.full(q, cfg.beta_step),
            "sigma": np.full(2, cfg.sigma_step),
            "mu": np.full(2, cfg.mu_step),
        }
        self.window = {k: np.zeros_like(v) for k, v in self.steps.items()}
        self.accepted = {k: 0.0 for k in self.steps}
        self.proposed = {k: 0.0 for k in self.steps}
        self.divergences = 0
        self.log_prior_weights = (math.log1p(-spec.group_prior), math.log(spec.group_prior))

    # Conditional targets

    def _agent_loglik(self, alpha: np.ndarray) -> np.ndarray:
        return _cell_loglik(alpha[:, None] * self.state.beta[None, :], self.y, self.mask).sum(axis=1)

    def _question_loglik(self, beta: np.ndarray) -> np.ndarray:
        return _cell_loglik(self.state.alpha[:, None] * beta[None, :], self.y, self.mask).sum(axis=0)

    def _alpha_prior(self, alpha: np.ndarray) -> np.ndarray:
        s = self.state
        if self.cfg.marginalize_groups:
            return self._mixture_logpdf(alpha, s.mu_safe, s.sigma_safe, s.mu_risky, s.sigma_risky)
        means, sds = s.group_params()
        return stats.norm.logpdf(alpha, means, sds)

    def _mixture_logpdf(self, alpha, mu_safe, sigma_safe, mu_risky, sigma_risky) -> np.ndarray:
        log_safe, log_risky = self.log_prior_weights
        return np.logaddexp(
            log_safe + stats.norm.logpdf(alpha, mu_safe, sigma_safe),
            log_risky + stats.norm.logpdf(alpha, mu_risky, sigma_risky),
        )

    def _beta_target(self, beta: np.ndarray) -> np.ndarray:
        # density of logit(beta): Beta prior times the Jacobian beta * (1 - beta)
        return (
            self._question_loglik(beta)
            + stats.beta.logpdf(beta, self.spec.beta_a, self.spec.beta_b)
            + np.log(beta) + np.log1p(-beta)
        )

    # Updates

    def _metropolis(self, family: str, log_ratio: np.ndarray, adapting: bool) -> np.ndarray:
        finite = np.isfinite(log_ratio)
        self.divergences += int((~finite).sum())
        u = self.rng.random(log_ratio.shape)
        accept = finite & (np.log(u) < np.where(finite, log_ratio, -np.inf))
        if adapting:
            self.window[family] += accept
        else:
            self.accepted[family] += float(accept.sum())
            self.proposed[family] += float(accept.size)
        return accept

    def update_groups(self) -> None:
        self.state.group = gibbs_update_groups(self.state, self.spec, self.rng)

    def update_alphas(self, adapting: bool) -> None:
        current = self.state.alpha
        proposal = current + self.steps["alpha"] * self.rng.standard_normal(current.shape)
        log_ratio = (
            self._agent_loglik(proposal) + self._alpha_prior(proposal)
            - self._agent_loglik(current) - self._alpha_prior(current)
        )
        accept = self._metropolis("alpha", log_ratio, adapting)
        self.state.alpha = np.where(accept, proposal, current)

    def update_betas(self, adapting: bool) -> None:
        current = self.state.beta
        if current.size == 0:
            return
        proposal = expit(logit(current) + self.steps["beta"] * self.rng.standard_normal(current.shape))
        log_ratio = self._beta_target(proposal) - self._beta_target(current)
        accept = self._metropolis("beta", log_ratio, adapting)
        self.state.beta = np.where(accept, proposal, current)

    def update_hyperparameters(self, adapting: bool) -> None:
        if self.cfg.marginalize_groups:
            self._update_mixture_hyperparameters(adapting)
            return
        s, spec = self.state, self.spec
        for k, (prior_mean, prior_sd) in enumerate(((spec.mu_safe_mean, spec.mu_safe_sd), (spec.mu_risky_mean, spec.mu_risky_sd))):
            members = s.alpha[s.group == k]
            sigma = s.sigma_risky if k else s.sigma_safe
            precision = 1.0 / prior_sd ** 2 + members.size / sigma ** 2
            mean = (prior_mean / prior_sd ** 2 + members.sum() / sigma ** 2) / precision
            mu = mean + self.rng.standard_normal() / math.sqrt(precision)
            if k:
                s.mu_risky = float(mu)
            else:
                s.mu_safe = float(mu)

        def sigma_target(sigma: np.ndarray) -> np.ndarray:
            out = np.empty(2)
            for k, mu in enumerate((s.mu_safe, s.mu_risky)):
                members = s.alpha[s.group == k]
                out[k] = stats.norm.logpdf(members, mu, sigma[k]).sum()
            return out + stats.expon.logpdf(sigma, scale=1.0 / spec.sigma_rate) + np.log(sigma)

        self._update_sigmas(sigma_target, adapting)

    def _update_sigmas(self, target, adapting: bool) -> None:
        s = self.state
        current = np.array([s.sigma_safe, s.sigma_risky])
        proposal = current * np.exp(self.steps["sigma"] * self.rng.standard_normal(2))
        # elementwise accept: each sigma only enters its own group's terms
        log_ratio = target(proposal) - target(current)
        accept = self._metropolis("sigma", log_ratio, adapting)
        new = np.where(accept, proposal, current)
        s.sigma_safe, s.sigma_risky = float(new[0]), float(new[1])

    def _update_mixture_hyperparameters(self, adapting: bool) -> None:
        s, spec = self.state, self.spec
        priors = ((spec.mu_safe_mean, spec.mu_safe_sd), (spec.mu_risky_mean, spec.mu_risky_sd))
        for k in range(2):
            current = np.array([s.mu_safe, s.sigma_safe, s.mu_risky, s.sigma_risky])
            proposal = current.copy()
            proposal[2 * k] += self.steps["mu"][k] * self.rng.standard_normal()
            log_ratio = (
                self._mixture_logpdf(s.alpha, *proposal).sum() + stats.norm.logpdf(proposal[2 * k], *priors[k])
                - self._mixture_logpdf(s.alpha, *current).sum() - stats.norm.logpdf(current[2 * k], *priors[k])
            )
            accept = self._metropolis_one("mu", k, float(log_ratio), adapting)
            if accept:
                s.mu_safe, s.sigma_safe, s.mu_risky, s.sigma_risky = (float(v) for v in proposal)
        for k in range(2):
            current = np.array([s.mu_safe, s.sigma_safe, s.mu_risky, s.sigma_risky])
            proposal = current.copy()
            proposal[2 * k + 1] *= math.exp(self.steps["sigma"][k] * self.rng.standard_normal())
            old, new = current[2 * k + 1], proposal[2 * k + 1]
            log_ratio = (
                self._mixture_logpdf(s.alpha, *proposal).sum() - self._mixture_logpdf(s.alpha, *current).sum()
                + stats.expon.logpdf(new, scale=1.0 / spec.sigma_rate) + math.log(new)
                - stats.expon.logpdf(old, scale=1.0 / spec.sigma_rate) - math.log(old)
            )
            accept = self._metropolis_one("sigma", k, float(log_ratio), adapting)
            if accept:
                s.mu_safe, s.sigma_safe, s.mu_risky, s.sigma_risky = (float(v) for v in proposal)

    def _metropolis_one(self, family: str, k: int, log_ratio: float, adapting: bool) -> bool:
        finite = math.isfinite(log_ratio)
        if not finite:
            self.divergences += 1
        accept = finite and math.log(self.rng.random()) < log_ratio
        if adapting:
            self.window[family][k] += accept
        else:
            self.accepted[family] += float(accept)
            self.proposed[family] += 1.0
        return accept

    def sweep(self, adapting: bool) -> None:
        if self.cfg.marginalize_groups:
            self.update_alphas(adapting)
            self.update_betas(adapting)
            self.update_hyperparameters(adapting)
            self.update_groups()
        else:
            self.update_groups()
            self.update_alphas(adapting)
            self.update_betas(adapting)
            self.update_hyperparameters(adapting)

    def adapt(self) -> None:
        """Nudge each step size toward the target acceptance band and reset the window."""
        low, high = self.cfg.target_acceptance
        for family, steps in self.steps.items():
            rate = self.window[family] / self.cfg.adapt_window
            steps *= np.where(rate < low, ADAPT_SHRINK, np.where(rate > high, ADAPT_GROW, 1.0))
            self.window[family][:] = 0

    def run(self) -> ChainResult:
        cfg = self.cfg
        for iteration in range(cfg.burn_in):
            self.sweep(adapting=True)
            self._check(iteration)
            if (iteration + 1) % cfg.adapt_window == 0:
                self.adapt()
        draws = np.empty((cfg.draws, len(self.state.vector())))
        for d in range(cfg.draws):
            for _ in range(cfg.thin):
                self.sweep(adapting=False)
            self._check(cfg.burn_in + d)
            draws[d] = self.state.vector()
        acceptance = {
            family: self.accepted[family] / self.proposed[family]
            for family in self.steps if self.proposed[family] > 0
        }
        step_sizes = {family: float(np.mean(steps)) for family, steps in self.steps.items() if self.proposed[family] > 0}
        return ChainResult(draws=draws, acceptance=acceptance, divergences=self.divergences, step_sizes=step_sizes)

    def _check(self, iteration: int) -> None:
        s = self.state
        values = [s.mu_safe, s.mu_risky, s.sigma_safe, s.sigma_risky]
        if not (all(math.isfinite(v) for v in values) and np.all(np.isfinite(s.alpha))):
            raise NumericalFailureError("sampler state became non-finite", iteration=iteration)


def _run_chain(answers: np.ndarray, spec: HierarchicalModelSpec, cfg: McmcConfig, seed: int, chain: int) -> ChainResult:
    result = ChainSampler(answers, spec, cfg, stream(seed, CHAIN_STREAM, chain)).run()
    log_event("mcmc_chain_finished", {
        "chain": chain, "acceptance": result.acceptance, "divergences": result.divergences,
    })
    return result


@dataclass
class PosteriorTrace:
    """Retained draws indexed (chain, draw, parameter)."""
    names: List[str]
    draws: np.ndarray
    agent_ids: List[int]
    question_ids: List[int]
    acceptance: Dict[str, float] = field(default_factory=dict)
    divergences: int = 0
    step_sizes: Dict[str, float] = field(default_factory=dict)

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise InvalidInputError(f"trace has no parameter '{name}'")

    def param(self, name: str) -> np.ndarray:
        """(chains, draws) samples of one scalar parameter."""
        return self.draws[:, :, self.index(name)]

    def family(self, prefix: str) -> List[str]:
        return [n for n in self.names if n.startswith(prefix + "[")]


def run_mcmc(
    data: Union[ResponseDataset, np.ndarray],
    spec: HierarchicalModelSpec,
    cfg: McmcConfig,
    seed: Optional[int] = None,
    workers: int = 1,
) -> PosteriorTrace:
    """
    Sample the posterior of the hierarchical model from the response matrix alone.

    Args:
        data: N x Q answers with 0, 1 or UNANSWERED (-1); Q may be 0
        spec: Priors
        cfg: Sampler settings; ``cfg.seed`` wins over ``seed`` when set
        seed: Master seed, each chain gets its own stream
        workers: Processes used to run chains in parallel

    Raises:
        InvalidInputError: On cells outside {0, 1, unanswered} or an empty agent axis
        NumericalFailureError: If a chain's state becomes non-finite
    """
    answers = _as_answers(data)
    n, q = answers.shape
    if n < 1:
        raise InvalidInputError("need at least one agent")
    if isinstance(data, ResponseDataset):
        agent_ids, question_ids = list(data.agent_ids), list(data.question_ids)
    else:
        agent_ids, question_ids = list(range(1, n + 1)), list(range(1, q + 1))
    master = cfg.seed if cfg.seed is not None else (seed if seed is not None else 0)
    logger.info(f"Sampling {cfg.chains} chains x {cfg.draws} draws ({n} agents, {q} questions)")
    chains = range(cfg.chains)
    if workers > 1 and cfg.chains > 1:
        with ProcessPoolExecutor(max_workers=min(workers, cfg.chains)) as pool:
            results = list(pool.map(_run_chain, *zip(*[(answers, spec, cfg, master, c) for c in chains])))
    else:
        results = [_run_chain(answers, spec, cfg, master, c) for c in chains]
    acceptance = {
        family: float(np.mean([r.acceptance[family] for r in results]))
        for family in results[0].acceptance
    }
    step_sizes = {
        family: float(np.mean([r.step_sizes[family] for r in results]))
        for family in results[0].step_sizes
    }
    trace = PosteriorTrace(
        names=parameter_names(agent_ids, question_ids),
        draws=np.stack([r.draws for r in results]),
        agent_ids=agent_ids,
        question_ids=question_ids,
        acceptance=acceptance,
        divergences=sum(r.divergences for r in results),
        step_sizes=step_sizes,
    )
    log_event("mcmc_finished", {"acceptance": acceptance, "divergences": trace.divergences})
    return trace


# Summaries

@dataclass(frozen=True)
class HdiInterval:
    lower: float
    upper: float
    mass: float = 0.94

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def compute_hdi(samples: Sequence[float], mass: float = 0.94) -> HdiInterval:
    """
    Highest density interval: the narrowest window of sorted samples holding ceil(mass * n) of them.

    Raises:
        InvalidInputError: With fewer than two samples or mass outside (0, 1)
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 2:
        raise InvalidInputError(f"need at least 2 samples, got {n}")
    if not 0.0 < mass < 1.0:
        raise InvalidInputError(f"mass must lie in (0, 1), got {mass}")
    k = max(1, math.ceil(mass * n - 1e-9))
    widths = x[k - 1:] - x[:n - k + 1]
    start = int(np.argmin(widths))
    return HdiInterval(lower=float(x[start]), upper=float(x[start + k - 1]), mass=mass)


def _split_chains(ary: np.ndarray) -> np.ndarray:
    half = ary.shape[1] // 2
    return np.vstack((ary[:, :half], ary[:, -half:]))


def split_rhat(ary: np.ndarray) -> float:
    """Split-chain potential scale reduction of a (chains, draws) array; NaN if degenerate."""
    ary = _split_chains(np.asarray(ary, dtype=float))
    _, n = ary.shape
    if n < 2:
        return math.nan
    within = np.mean(np.var(ary, axis=1, ddof=1))
    if within == 0:
        return math.nan
    between = n * np.var(np.mean(ary, axis=1), ddof=1)
    return float(np.sqrt((between / within + n - 1) / n))


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.size
    centered = x - x.mean()
    size = 2 ** int(math.ceil(math.log2(2 * n)))
    spectrum = np.fft.rfft(centered, size)
    return np.fft.irfft(spectrum * np.conj(spectrum), size)[:n] / n


def effective_sample_size(ary: np.ndarray) -> float:
    """Geyer initial-monotone-sequence ESS over split chains; NaN if degenerate."""
    ary = _split_chains(np.asarray(ary, dtype=float))
    n_chain, n_draw = ary.shape
    if n_draw < 5:
        return math.nan
    acov = np.asarray([_autocov(chain) for chain in ary])
    mean_var = np.mean(acov[:, 0]) * n_draw / (n_draw - 1.0)
    if mean_var == 0:
        return math.nan
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += np.var(ary.mean(axis=1), ddof=1)

    rho = np.zeros(n_draw)
    rho_even = 1.0
    rho[0] = rho_even
    rho_odd = 1.0 - (mean_var - np.mean(acov[:, 1])) / var_plus
    rho[1] = rho_odd
    # stop at the first pair of autocorrelations whose sum is negative
    t = 1
    while t < n_draw - 3 and rho_even + rho_odd > 0.0:
        rho_even = 1.0 - (mean_var - np.mean(acov[:, t + 1])) / var_plus
        rho_odd = 1.0 - (mean_var - np.mean(acov[:, t + 2])) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = t - 2
    if rho_even > 0:
        rho[max_t + 1] = rho_even
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2
    tau = -1.0 + 2.0 * np.sum(rho[:max_t + 1]) + np.sum(rho[max_t + 1:max_t + 2])
    return float(n_chain * n_draw / tau)


def pooled(trace: PosteriorTrace, name: str) -> np.ndarray:
    """All retained draws of one parameter, chains concatenated."""
    return trace.param(name).ravel()


def swapped_chains(trace: PosteriorTrace) -> List[int]:
    """Chains whose safe component sits above the risky one on average."""
    safe = trace.param("mu_safe").mean(axis=1)
    risky = trace.param("mu_risky").mean(axis=1)
    return [int(c) for c in np.flatnonzero(safe > risky)]


def detect_label_swap(trace: PosteriorTrace) -> bool:
    """True when any chain puts mu_safe above mu_risky (which includes a swap of the pooled means)."""
    return bool(swapped_chains(trace))


def summarize(trace: PosteriorTrace, mass: float = 0.94) -> pd.DataFrame:
    """
    One row per scalar parameter: mean, sd, HDI bounds, split R-hat and ESS.

    Parameters whose draws do not vary get NaN diagnostics and ``degenerate = True``.
    """
    if trace.n_draws == 0:
        raise InvalidInputError("trace is empty")
    rows = []
    for name in trace.names:
        samples = trace.param(name)
        flat = samples.ravel()
        degenerate = bool(np.all(flat == flat[0]))
        if flat.size >= 2:
            hdi = compute_hdi(flat, mass)
            lower, upper = hdi.lower, hdi.upper
        else:
            lower = upper = float(flat[0])
        rows.append({
            "parameter": name,
            "mean": float(flat.mean()),
            "sd": float(flat.std(ddof=1)) if flat.size > 1 else 0.0,
            "hdi_lower": lower,
            "hdi_upper": upper,
            "r_hat": math.nan if degenerate else split_rhat(samples),
            "ess": math.nan if degenerate else effective_sample_size(samples),
            "degenerate": degenerate,
        })
    swapped = swapped_chains(trace)
    if swapped:
        logger.warning(f"Possible label swap in chains {swapped}: mean(mu_safe) > mean(mu_risky)")
        log_event("label_swap", {"chains": swapped})
    return pd.DataFrame(rows)


def trace_frame(trace: PosteriorTrace) -> pd.DataFrame:
    """Long table: chain and draw columns then one column per scalar parameter."""
    chains, draws, _ = trace.draws.shape
    frame = pd.DataFrame(trace.draws.reshape(chains * draws, -1), columns=trace.names)
    frame.insert(0, "draw", np.tile(np.arange(draws), chains))
    frame.insert(0, "chain", np.repeat(np.arange(chains), draws))
    for name in trace.family("group"):
        frame[name] = frame[name].astype(np.int64)
    return frame


def trace_from_frame(frame: pd.DataFrame) -> PosteriorTrace:
    """Rebuild a trace from ``trace_frame`` output (diagnostic fields are not stored)."""
    names = [c for c in frame.columns if c not in ("chain", "draw")]
    chains = int(frame["chain"].max()) + 1
    draws = np.stack([
        frame.loc[frame["chain"] == c, names].to_numpy(dtype=float) for c in range(chains)
    ])
    agent_ids = [int(n[6:-1]) for n in names if n.startswith("alpha[")]
    question_ids = [int(n[5:-1]) for n in names if n.startswith("beta[")]
    return PosteriorTrace(names=names, draws=draws, agent_ids=agent_ids, question_ids=question_ids)
