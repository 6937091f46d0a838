import logging
import math

import numpy as np
import pytest

from sgsynth.bayes_infer import (
    HYPERPARAMETERS,
    ModelState,
    PosteriorTrace,
    compute_hdi,
    detect_label_swap,
    effective_sample_size,
    gibbs_update_groups,
    group_probability,
    initial_state,
    log_likelihood,
    log_posterior,
    log_prior,
    parameter_names,
    pooled,
    run_mcmc,
    split_rhat,
    summarize,
    swapped_chains,
    trace_frame,
    trace_from_frame,
)
from sgsynth.errors import InvalidInputError
from sgsynth.irt_engine import UNANSWERED
from sgsynth.schemas import AppConfig, HierarchicalModelSpec, McmcConfig
from sgsynth.simulator import run_simulation

SPEC = HierarchicalModelSpec()


def state(n=3, q=2, **overrides) -> ModelState:
    values = dict(
        mu_safe=-2.0, sigma_safe=0.7, mu_risky=0.5, sigma_risky=1.2,
        alpha=np.zeros(n), group=np.zeros(n, dtype=np.int64), beta=np.full(q, 0.5),
    )
    values.update(overrides)
    return ModelState(**values)


def small_answers(seed=0, n=6, q=3):
    return np.random.default_rng(seed).integers(0, 2, size=(n, q))


class TestLogPosterior:
    def test_zero_alpha_gives_coin_flips(self):
        answers = small_answers(n=3, q=2)
        s = state()
        assert log_likelihood(s.alpha, s.beta, answers) == pytest.approx(6 * math.log(0.5))
        assert log_posterior(s, answers, SPEC) == pytest.approx(log_prior(s, SPEC) + 6 * math.log(0.5))

    def test_zero_beta_gives_coin_flips(self):
        answers = small_answers(n=4, q=5)
        alpha = np.array([-3.0, 0.1, 2.0, 5.0])
        assert log_likelihood(alpha, np.zeros(5), answers) == pytest.approx(20 * math.log(0.5))

    def test_single_cell(self):
        assert log_likelihood(np.array([2.0]), np.array([1.0]), np.array([[1]])) == pytest.approx(
            math.log(0.880797), abs=1e-6
        )

    def test_unanswered_cells_contribute_nothing(self):
        answers = np.array([[1, UNANSWERED], [UNANSWERED, UNANSWERED]])
        value = log_likelihood(np.array([2.0, -1.0]), np.array([1.0, 0.3]), answers)
        assert value == pytest.approx(math.log(0.880797), abs=1e-6)

    @pytest.mark.parametrize(
        "overrides",
        [{"sigma_safe": -1.0}, {"sigma_risky": 0.0}, {"beta": np.array([0.5, 1.2])}, {"group": np.array([0, 2, 1])}],
    )
    def test_outside_support_is_minus_infinity(self, overrides):
        assert log_posterior(state(**overrides), small_answers(n=3, q=2), SPEC) == -math.inf

    def test_difference_matches_naive_loop(self):
        rng = np.random.default_rng(4)
        answers = small_answers(seed=5, n=5, q=4)
        answers[1, 2] = UNANSWERED
        a = state(n=5, q=4, alpha=rng.normal(size=5), beta=rng.uniform(size=4), group=np.array([0, 1, 0, 1, 1]))
        b = state(n=5, q=4, alpha=rng.normal(size=5), beta=rng.uniform(size=4), group=np.array([0, 1, 0, 1, 1]))

        def naive(s):
            total = 0.0
            for i in range(5):
                for j in range(4):
                    if answers[i, j] == UNANSWERED:
                        continue
                    p = 1.0 / (1.0 + math.exp(-s.alpha[i] * s.beta[j]))
                    total += math.log(p) if answers[i, j] == 1 else math.log(1.0 - p)
            return total

        observed = (log_posterior(a, answers, SPEC) - log_prior(a, SPEC)) - (log_posterior(b, answers, SPEC) - log_prior(b, SPEC))
        assert observed == pytest.approx(naive(a) - naive(b), abs=1e-9)

    def test_bad_cell_is_rejected(self):
        answers = small_answers()
        answers[2, 1] = 2
        with pytest.raises(InvalidInputError, match=r"\(3, 2\)"):
            run_mcmc(answers, SPEC, McmcConfig(chains=1, draws=5, burn_in=0))


class TestGroupUpdate:
    def test_gibbs_frequency_matches_full_conditional(self):
        s = state(n=100_000, q=1, alpha=np.full(100_000, -0.4))
        expected = float(group_probability(np.array([-0.4]), s, SPEC)[0])
        draws = gibbs_update_groups(s, SPEC, np.random.default_rng(6))
        assert draws.mean() == pytest.approx(expected, abs=0.005)

    def test_full_conditional_with_equal_components_is_the_prior(self):
        s = state(mu_safe=0.0, sigma_safe=1.0, mu_risky=0.0, sigma_risky=1.0)
        np.testing.assert_allclose(group_probability(np.array([-1.0, 0.0, 3.0]), s, SPEC), 0.5)


class TestHdi:
    def test_uniform_width(self):
        hdi = compute_hdi(np.random.default_rng(7).uniform(size=10_000), 0.94)
        assert hdi.width == pytest.approx(0.94, abs=0.01)

    def test_point_mass(self):
        hdi = compute_hdi(np.full(50, 3.7))
        assert (hdi.lower, hdi.upper) == (3.7, 3.7)
        assert hdi.contains(3.7) and not hdi.contains(3.71)

    def test_standard_normal(self):
        hdi = compute_hdi(np.random.default_rng(8).standard_normal(100_000), 0.94)
        assert hdi.lower == pytest.approx(-1.88, abs=0.03)
        assert hdi.upper == pytest.approx(1.88, abs=0.03)

    def test_counts_ceil_of_mass(self):
        hdi = compute_hdi(np.arange(10.0), 0.5)
        assert hdi.width == 4.0

    @pytest.mark.parametrize("samples,mass", [([1.0], 0.9), ([1.0, 2.0], 1.0), ([1.0, 2.0], 0.0)])
    def test_rejects_bad_input(self, samples, mass):
        with pytest.raises(InvalidInputError):
            compute_hdi(samples, mass)


class TestConvergenceDiagnostics:
    def test_rhat_of_well_mixed_chains(self):
        draws = np.random.default_rng(9).standard_normal((2, 2000))
        assert split_rhat(draws) < 1.01
        assert split_rhat(np.vstack([draws[0], draws[0]])) < 1.01

    def test_rhat_flags_disagreeing_chains(self):
        draws = np.random.default_rng(10).standard_normal((2, 1000))
        draws[1] += 3.0
        assert split_rhat(draws) > 1.5

    def test_ess_of_independent_draws(self):
        draws = np.random.default_rng(11).standard_normal((4, 1000))
        assert 0.7 * 4000 < effective_sample_size(draws) < 1.3 * 4000

    def test_ess_of_autocorrelated_draws(self):
        rng = np.random.default_rng(12)
        phi, draws = 0.9, np.zeros((4, 5000))
        for t in range(1, 5000):
            draws[:, t] = phi * draws[:, t - 1] + rng.standard_normal(4)
        expected = 20_000 * (1 - phi) / (1 + phi)
        assert 0.6 * expected < effective_sample_size(draws) < 1.5 * expected

    def test_ess_of_sticky_draws(self):
        rng = np.random.default_rng(16)
        phi, draws = 0.95, np.zeros((4, 50_000))
        for t in range(1, draws.shape[1]):
            draws[:, t] = phi * draws[:, t - 1] + rng.standard_normal(4)
        expected = draws.size * (1 - phi) / (1 + phi)
        assert 0.85 * expected < effective_sample_size(draws) < 1.15 * expected

    def test_degenerate_inputs(self):
        assert math.isnan(split_rhat(np.ones((2, 100))))
        assert math.isnan(effective_sample_size(np.ones((2, 100))))
        assert math.isnan(effective_sample_size(np.zeros((1, 5))))

    def test_stuck_chain_is_flagged(self):
        rng = np.random.default_rng(13)
        names = parameter_names([1], [1])
        draws = rng.normal(size=(2, 100, len(names)))
        draws[:, :, names.index("sigma_safe")] = 1.0
        draws[:, :, names.index("mu_safe")] = -1.0
        draws[:, :, names.index("mu_risky")] = 1.0
        draws[:, :, names.index("group[1]")] = 0.0
        trace = PosteriorTrace(names=names, draws=draws, agent_ids=[1], question_ids=[1])
        table = summarize(trace).set_index("parameter")
        assert table.loc["sigma_safe", "degenerate"]
        assert math.isnan(table.loc["sigma_safe", "ess"])
        assert table.loc["sigma_safe", "hdi_lower"] == table.loc["sigma_safe", "hdi_upper"] == 1.0
        assert not table.loc["alpha[1]", "degenerate"]

    def test_label_swap(self):
        names = parameter_names([1], [])
        draws = np.zeros((1, 10, len(names)))
        draws[:, :, names.index("mu_safe")] = 1.0
        assert detect_label_swap(PosteriorTrace(names=names, draws=draws, agent_ids=[1], question_ids=[]))

    def test_single_swapped_chain_is_reported(self, caplog):
        rng = np.random.default_rng(14)
        names = parameter_names([1], [])
        draws = rng.normal(scale=0.1, size=(4, 50, len(names)))
        safe, risky = names.index("mu_safe"), names.index("mu_risky")
        draws[:, :, safe] -= 2.0
        draws[:, :, risky] += 0.5
        draws[3, :, [safe, risky]] = draws[3, :, [risky, safe]]
        trace = PosteriorTrace(names=names, draws=draws, agent_ids=[1], question_ids=[])
        assert pooled(trace, "mu_safe").mean() < pooled(trace, "mu_risky").mean()
        assert swapped_chains(trace) == [3]
        assert detect_label_swap(trace)
        with caplog.at_level(logging.WARNING, logger="sgsynth.bayes_infer"):
            table = summarize(trace).set_index("parameter")
        assert "label swap in chains [3]" in caplog.text
        assert table.loc["mu_safe", "r_hat"] > 1.5

    def test_agreeing_chains_are_not_flagged(self, caplog):
        names = parameter_names([1], [])
        draws = np.random.default_rng(15).normal(scale=0.1, size=(4, 50, len(names)))
        draws[:, :, names.index("mu_safe")] -= 2.0
        trace = PosteriorTrace(names=names, draws=draws, agent_ids=[1], question_ids=[])
        with caplog.at_level(logging.WARNING, logger="sgsynth.bayes_infer"):
            summarize(trace)
        assert swapped_chains(trace) == []
        assert "label swap" not in caplog.text


def quick_mcmc(**overrides) -> McmcConfig:
    values = dict(chains=2, draws=60, burn_in=60, adapt_window=20)
    values.update(overrides)
    return McmcConfig(**values)


class TestRunMcmc:
    def test_trace_layout_and_support(self):
        trace = run_mcmc(small_answers(), SPEC, quick_mcmc(), seed=1)
        assert trace.draws.shape == (2, 60, 4 + 6 + 6 + 3)
        assert trace.names[:4] == list(HYPERPARAMETERS)
        sigmas = trace.draws[:, :, [trace.index("sigma_safe"), trace.index("sigma_risky")]]
        assert (sigmas > 0).all()
        betas = trace.draws[:, :, [trace.index(n) for n in trace.family("beta")]]
        assert ((betas >= 0) & (betas <= 1)).all()
        groups = trace.draws[:, :, [trace.index(n) for n in trace.family("group")]]
        assert np.isin(groups, (0.0, 1.0)).all()
        assert set(trace.acceptance) == {"alpha", "beta", "sigma"}
        assert all(0.0 <= rate <= 1.0 for rate in trace.acceptance.values())

    def test_summary_row_count(self):
        trace = run_mcmc(small_answers(), SPEC, quick_mcmc(), seed=1)
        table = summarize(trace)
        assert len(table) == 4 + 6 + 6 + 3
        assert list(table.columns) == ["parameter", "mean", "sd", "hdi_lower", "hdi_upper", "r_hat", "ess", "degenerate"]

    def test_same_seed_same_trace(self):
        a = run_mcmc(small_answers(), SPEC, quick_mcmc(), seed=3)
        b = run_mcmc(small_answers(), SPEC, quick_mcmc(), seed=3)
        np.testing.assert_array_equal(a.draws, b.draws)

    def test_parallel_chains_match_serial(self):
        serial = run_mcmc(small_answers(), SPEC, quick_mcmc(), seed=3)
        parallel = run_mcmc(small_answers(), SPEC, quick_mcmc(), seed=3, workers=2)
        np.testing.assert_array_equal(serial.draws, parallel.draws)

    def test_config_seed_wins(self):
        a = run_mcmc(small_answers(), SPEC, quick_mcmc(seed=5), seed=9)
        b = run_mcmc(small_answers(), SPEC, quick_mcmc(), seed=5)
        np.testing.assert_array_equal(a.draws, b.draws)

    def test_constant_columns_are_legal(self):
        answers = np.zeros((5, 3), dtype=int)
        answers[:, 1] = 1
        trace = run_mcmc(answers, SPEC, quick_mcmc(chains=1))
        assert np.isfinite(trace.draws).all()

    def test_marginalized_mode(self):
        trace = run_mcmc(small_answers(), SPEC, quick_mcmc(marginalize_groups=True), seed=2)
        groups = trace.draws[:, :, [trace.index(n) for n in trace.family("group")]]
        assert np.isin(groups, (0.0, 1.0)).all()
        assert "mu" in trace.acceptance

    def test_initial_state_follows_the_answers(self):
        answers = np.zeros((6, 10), dtype=int)
        answers[3:] = 1
        s = initial_state(answers, SPEC, np.random.default_rng(0))
        assert s.mu_safe < s.mu_risky
        assert (s.alpha[:3] < 0).all() and (s.alpha[3:] > 0).all()
        assert list(s.group) == [0, 0, 0, 1, 1, 1]
        assert ((s.beta > 0) & (s.beta < 1)).all()

    def test_initial_state_without_questions(self):
        s = initial_state(np.zeros((5, 0), dtype=int), SPEC, np.random.default_rng(0))
        assert np.isfinite(s.alpha).all() and s.alpha.shape == (5,)
        assert np.isin(s.group, (0, 1)).all()
        assert s.beta.size == 0

    def test_no_agents(self):
        with pytest.raises(InvalidInputError):
            run_mcmc(np.zeros((0, 3), dtype=int), SPEC, quick_mcmc())

    def test_response_dataset_ids_name_the_parameters(self, example_net):
        cfg = AppConfig.model_validate({"seed": 4, "population": {"n_agents": 4}, "environment": {"n_questions": 2}})
        dataset = run_simulation(cfg, net=example_net)
        trace = run_mcmc(dataset.responses, SPEC, quick_mcmc(chains=1), seed=4)
        assert trace.family("alpha") == ["alpha[1]", "alpha[2]", "alpha[3]", "alpha[4]"]
        assert trace.family("beta") == ["beta[1]", "beta[2]"]

    def test_trace_table_rebuilds_the_draws(self):
        trace = run_mcmc(small_answers(), SPEC, quick_mcmc(), seed=1)
        frame = trace_frame(trace)
        assert list(frame.columns[:2]) == ["chain", "draw"]
        assert frame["group[1]"].dtype == np.int64
        np.testing.assert_array_equal(trace_from_frame(frame).draws, trace.draws)


@pytest.mark.slow
def test_without_questions_the_posterior_is_the_prior():
    cfg = McmcConfig(chains=4, draws=5000, burn_in=1000)
    trace = run_mcmc(np.zeros((2, 0), dtype=int), SPEC, cfg, seed=11)
    for name, mean, sd in (("mu_safe", SPEC.mu_safe_mean, SPEC.mu_safe_sd), ("mu_risky", SPEC.mu_risky_mean, SPEC.mu_risky_sd)):
        samples = trace.param(name).ravel()
        assert samples.mean() == pytest.approx(mean, abs=0.1 * sd)
        assert samples.std() == pytest.approx(sd, rel=0.1)
    sigma = trace.param("sigma_safe").ravel()
    assert sigma.mean() == pytest.approx(1.0 / SPEC.sigma_rate, rel=0.1)


@pytest.mark.slow
def test_case_study_recovery(example_net):
    full_hyper_coverage = 0
    for seed in (2023, 2024, 2025):
        cfg = AppConfig.model_validate({"seed": seed, "population": {"n_agents": 500}, "environment": {"n_questions": 15}})
        dataset = run_simulation(cfg, net=example_net)
        trace = run_mcmc(dataset.responses, SPEC, McmcConfig(), seed=seed, workers=4)
        table = summarize(trace).set_index("parameter")

        assert swapped_chains(trace) == [], f"seed {seed}"
        assert (table.loc[list(HYPERPARAMETERS), "r_hat"] < 1.1).all(), f"seed {seed}"

        truth = dataset.hyperparams.model_dump()
        covered = sum(table.loc[n, "hdi_lower"] <= truth[n] <= table.loc[n, "hdi_upper"] for n in HYPERPARAMETERS)
        assert covered >= 3, f"seed {seed}"
        full_hyper_coverage += covered == 4

        hits = sum(
            table.loc[f"beta[{j}]", "hdi_lower"] <= b <= table.loc[f"beta[{j}]", "hdi_upper"]
            for j, b in zip(dataset.responses.question_ids, dataset.responses.betas)
        )
        assert hits >= 13, f"seed {seed}"
    assert full_hyper_coverage >= 2
