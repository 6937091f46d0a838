import numpy as np
import pytest

from sgsynth.errors import ImpossibleEvidenceError, InvalidInputError
from sgsynth.graphical_model import query
from sgsynth.population import (
    RISKY,
    SAFE,
    alpha_histogram,
    assign_group,
    fit_alpha_mixture,
    generate_population,
    population_frame,
    risky_probability,
    sample_alpha,
)
from sgsynth.schemas import MixtureHyperparams

TARGET = "ExperiencedCyberbullying"


def streams(n, seed=0):
    return [np.random.default_rng([seed, i]) for i in range(n)]


def test_assign_group_extremes(rng):
    assert all(assign_group(1.0, rng) == RISKY for _ in range(50))
    assert all(assign_group(0.0, rng) == SAFE for _ in range(50))


def test_assign_group_rejects_bad_probability(rng):
    with pytest.raises(InvalidInputError):
        assign_group(1.5, rng)


def test_sample_alpha_follows_group(rng):
    hp = MixtureHyperparams(mu_safe=-3.0, sigma_safe=0.1, mu_risky=3.0, sigma_risky=0.1)
    assert sample_alpha(SAFE, hp, rng) < 0 < sample_alpha(RISKY, hp, rng)
    with pytest.raises(InvalidInputError):
        sample_alpha(2, hp, rng)


def test_p_risky_is_the_exact_conditional(example_net):
    agents = generate_population(example_net, TARGET, "Yes", 20, MixtureHyperparams(), {}, streams(20))
    for agent in agents:
        expected = query(example_net, TARGET, agent.attributes)[1]
        assert agent.p_risky == pytest.approx(expected)
        assert TARGET not in agent.attributes
        assert agent.group in (SAFE, RISKY)
    assert [a.id for a in agents] == list(range(1, 21))


def test_risky_probability_ignores_the_target_state(example_net):
    attributes = {"Gender": 0, "SexualOrientation": 1, TARGET: 0}
    assert risky_probability(example_net, TARGET, 1, attributes) == pytest.approx(
        query(example_net, TARGET, {"Gender": 0, "SexualOrientation": 1})[1]
    )


def test_single_agent(example_net):
    agents = generate_population(example_net, TARGET, "Yes", 1, MixtureHyperparams(), {}, streams(1))
    assert len(agents) == 1


def test_threads_do_not_change_the_result(example_net):
    serial = generate_population(example_net, TARGET, "Yes", 25, MixtureHyperparams(), {}, streams(25, 3))
    threaded = generate_population(example_net, TARGET, "Yes", 25, MixtureHyperparams(), {}, streams(25, 3), workers=4)
    assert [a.alpha for a in serial] == [a.alpha for a in threaded]


def test_evidence_is_clamped(example_net):
    evidence = {"SexualOrientation": 1}
    agents = generate_population(example_net, TARGET, "Yes", 15, MixtureHyperparams(), evidence, streams(15))
    assert all(a.attributes["SexualOrientation"] == 1 for a in agents)


def test_target_in_evidence_is_rejected(example_net):
    with pytest.raises(InvalidInputError):
        generate_population(example_net, TARGET, "Yes", 5, MixtureHyperparams(), {TARGET: 1}, streams(5))


def test_unknown_risky_label(example_net):
    with pytest.raises(InvalidInputError):
        generate_population(example_net, TARGET, "Maybe", 5, MixtureHyperparams(), {}, streams(5))


def test_impossible_evidence(sprinkler_net):
    evidence = {"Sprinkler": 0, "Rain": 0, "WetGrass": 1}
    with pytest.raises(ImpossibleEvidenceError):
        generate_population(sprinkler_net, "Cloudy", "T", 3, MixtureHyperparams(), evidence, streams(3))


def test_population_frame_uses_labels(example_net):
    agents = generate_population(example_net, TARGET, "Yes", 4, MixtureHyperparams(), {}, streams(4))
    frame = population_frame(agents, example_net)
    assert list(frame.columns[:4]) == ["id", "group", "alpha", "p_risky"]
    assert set(frame["Gender"]) <= {"Male", "Female", "Non-binary"}


def test_alpha_histogram_clips_into_range():
    counts, edges = alpha_histogram([-100.0, 0.0, 100.0], bins=4, value_range=(-2.0, 2.0))
    assert counts.tolist() == [1, 0, 1, 1]
    assert edges[0] == -2.0 and edges[-1] == 2.0


def test_mixture_fit_recovers_components():
    rng = np.random.default_rng(21)
    x = np.concatenate([rng.normal(-2.0, 0.5, 600), rng.normal(2.0, 0.5, 400)])
    fit = fit_alpha_mixture(x)
    assert fit.hyperparams.mu_safe == pytest.approx(-2.0, abs=0.1)
    assert fit.hyperparams.mu_risky == pytest.approx(2.0, abs=0.1)
    assert fit.hyperparams.sigma_safe == pytest.approx(0.5, abs=0.1)
    assert fit.risky_weight == pytest.approx(0.4, abs=0.05)


@pytest.mark.slow
def test_profiles_are_bimodal(example_net):
    hp = MixtureHyperparams()
    agents = generate_population(example_net, TARGET, "Yes", 5000, hp, {}, streams(5000, 1))
    fit = fit_alpha_mixture([a.alpha for a in agents])
    assert fit.hyperparams.mu_safe == pytest.approx(hp.mu_safe, abs=0.3)
    assert fit.hyperparams.mu_risky == pytest.approx(hp.mu_risky, abs=0.3)
    assert fit.risky_weight < 0.5
    mean_p = np.mean([a.p_risky for a in agents])
    assert fit.risky_weight == pytest.approx(mean_p, abs=0.08)
