"""Shared fixtures: small networks, the full-joint enumeration oracle, seeded generators."""
import itertools
from pathlib import Path

import numpy as np
import pytest

from sgsynth import io
from sgsynth.graphical_model import BayesianNetwork, Cpt, Dag, Variable, joint_probability

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow statistical tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def example_net() -> BayesianNetwork:
    return io.load_network(DATA_DIR / "example_network.yaml")


def make_network(states, edges, tables) -> BayesianNetwork:
    """Network from {name: states}, edge list and {name: (parents, nested rows)}."""
    dag = Dag(
        variables=tuple(Variable(name, tuple(s)) for name, s in states.items()),
        edges=tuple(edges),
    )
    cpts = {}
    for name, (parents, rows) in tables.items():
        shape = tuple(len(states[p]) for p in parents) + (len(states[name]),)
        cpts[name] = Cpt(child=name, parents=tuple(parents), table=np.asarray(rows, dtype=float).reshape(shape))
    return BayesianNetwork(dag=dag, cpts=cpts)


@pytest.fixture
def sprinkler_net() -> BayesianNetwork:
    """Cloudy -> {Sprinkler, Rain} -> WetGrass, all binary (False, True)."""
    tf = ["F", "T"]
    return make_network(
        {"Cloudy": tf, "Sprinkler": tf, "Rain": tf, "WetGrass": tf},
        [("Cloudy", "Sprinkler"), ("Cloudy", "Rain"), ("Sprinkler", "WetGrass"), ("Rain", "WetGrass")],
        {
            "Cloudy": ([], [[0.5, 0.5]]),
            "Sprinkler": (["Cloudy"], [[0.5, 0.5], [0.9, 0.1]]),
            "Rain": (["Cloudy"], [[0.8, 0.2], [0.2, 0.8]]),
            "WetGrass": (["Sprinkler", "Rain"], [[1.0, 0.0], [0.1, 0.9], [0.1, 0.9], [0.01, 0.99]]),
        },
    )


def random_network(rng: np.random.Generator, n_nodes: int, max_card: int = 3) -> BayesianNetwork:
    """Random DAG over X0..Xn-1 (edges only forward) with Dirichlet CPT rows."""
    names = [f"X{k}" for k in range(n_nodes)]
    cards = {n: int(rng.integers(2, max_card + 1)) for n in names}
    edges = [(names[a], names[b]) for a in range(n_nodes) for b in range(a + 1, n_nodes) if rng.random() < 0.5]
    tables = {}
    for name in names:
        parents = [p for p, c in edges if c == name]
        rows = int(np.prod([cards[p] for p in parents])) if parents else 1
        tables[name] = (parents, rng.dirichlet(np.ones(cards[name]), size=rows))
    return make_network({n: [str(s) for s in range(cards[n])] for n in names}, edges, tables)


def enumerate_posterior(net: BayesianNetwork, target: str, evidence) -> np.ndarray:
    """P(target | evidence) by summing the full joint over every assignment."""
    names = list(net.names)
    probs = np.zeros(net.variable(target).cardinality)
    for states in itertools.product(*(range(net.variable(n).cardinality) for n in names)):
        assignment = dict(zip(names, states))
        if any(assignment[k] != v for k, v in evidence.items()):
            continue
        probs[assignment[target]] += joint_probability(net, assignment)
    return probs / probs.sum()


@pytest.fixture
def oracle():
    return enumerate_posterior


@pytest.fixture
def network_factory():
    return random_network
