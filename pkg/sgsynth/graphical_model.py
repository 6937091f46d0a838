"""
Discrete Bayesian networks.

Structure, parameter learning from complete (MLE) and incomplete (EM) data,
exact queries by variable elimination, and forward/Gibbs sampling. This is
the channel through which expert knowledge and survey data enter the
simulation.

States are stored as indices; every variable keeps its ordered label list.
Data tables are integer arrays with one column per variable in DAG order and
``MISSING`` (-1) for unobserved cells.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property, reduce
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from .errors import (
    ConfigError,
    CycleError,
    ImpossibleEvidenceError,
    InvalidInputError,
    NumericalFailureError,
)
from .schemas import CptDefinition, NetworkDefinition, VariableDefinition

logger = logging.getLogger(__name__)

MISSING = -1
ROW_SUM_TOLERANCE = 1e-9

Observation = Mapping[str, int]
DataTable = Union[np.ndarray, Sequence[Observation]]


@dataclass(frozen=True)
class Variable:
    """Discrete variable with ordered state labels."""
    name: str
    states: Tuple[str, ...]

    @property
    def cardinality(self) -> int:
        return len(self.states)

    def index(self, label: str) -> int:
        """Return the state index of ``label``."""
        try:
            return self.states.index(str(label))
        except ValueError:
            raise InvalidInputError(f"'{label}' is not a state of {self.name} {list(self.states)}")


@dataclass(frozen=True)
class Dag:
    """Directed graph over variables. Acyclicity is checked, not enforced."""
    variables: Tuple[Variable, ...]
    edges: Tuple[Tuple[str, str], ...] = ()

    @cached_property
    def names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @cached_property
    def _by_name(self) -> Dict[str, Variable]:
        return {v.name: v for v in self.variables}

    def variable(self, name: str) -> Variable:
        try:
            return self._by_name[name]
        except KeyError:
            raise InvalidInputError(f"unknown variable '{name}'")

    def position(self, name: str) -> int:
        self.variable(name)
        return self.names.index(name)

    def parents(self, name: str) -> Tuple[str, ...]:
        return tuple(p for p, c in self.edges if c == name)

    def children(self, name: str) -> Tuple[str, ...]:
        return tuple(c for p, c in self.edges if p == name)

    def to_digraph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(self.names)
        graph.add_edges_from(self.edges)
        return graph


def topological_order(dag: Dag) -> List[str]:
    """
    Order variables so that every parent precedes its children.

    Ties are broken by declaration order, so the result is deterministic.

    Raises:
        CycleError: If the graph has a directed cycle
    """
    graph = dag.to_digraph()
    if not nx.is_directed_acyclic_graph(graph):
        cycle = nx.find_cycle(graph)
        raise CycleError(f"graph has a directed cycle: {' -> '.join(p for p, _ in cycle)}")
    return list(nx.lexicographical_topological_sort(graph, key=dag.names.index))


def markov_blanket(dag: Dag, name: str) -> set:
    """Parents, children and co-parents of ``name``."""
    blanket = set(dag.parents(name)) | set(dag.children(name))
    for child in dag.children(name):
        blanket |= set(dag.parents(child))
    blanket.discard(name)
    return blanket


@dataclass(frozen=True, eq=False)
class Cpt:
    """Conditional probability table with axes ``(*parents, child)``."""
    child: str
    parents: Tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        table.flags.writeable = False
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "parents", tuple(self.parents))

    def rows(self) -> np.ndarray:
        """One row per joint parent configuration (last parent fastest)."""
        return self.table.reshape(-1, self.table.shape[-1])

    def row(self, parent_states: Sequence[int]) -> np.ndarray:
        return self.table[tuple(parent_states)]


@dataclass(frozen=True, eq=False)
class BayesianNetwork:
    """DAG plus one CPT per node. Immutable; safe to share across threads."""
    dag: Dag
    cpts: Mapping[str, Cpt]
    name: str = "network"

    @property
    def names(self) -> Tuple[str, ...]:
        return self.dag.names

    def variable(self, name: str) -> Variable:
        return self.dag.variable(name)

    def cpt(self, name: str) -> Cpt:
        try:
            return self.cpts[name]
        except KeyError:
            raise InvalidInputError(f"no CPT for variable '{name}'")

    @cached_property
    def order(self) -> List[str]:
        return topological_order(self.dag)

    @cached_property
    def cardinalities(self) -> Dict[str, int]:
        return {v.name: v.cardinality for v in self.dag.variables}


@dataclass
class ValidationReport:
    """Invariant violations of a network; empty when the network is valid."""
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str) -> None:
        self.violations.append(message)


def validate_network(net: BayesianNetwork) -> ValidationReport:
    """
    Collect every structural and numerical invariant violation.

    Violations are returned as data; nothing is raised.
    """
    report = ValidationReport()
    dag = net.dag
    seen_names = set()
    for var in dag.variables:
        if var.name in seen_names:
            report.add(f"duplicate variable '{var.name}'")
        seen_names.add(var.name)
        if var.cardinality < 2:
            report.add(f"variable '{var.name}' has cardinality {var.cardinality} (< 2)")
        if len(set(var.states)) != var.cardinality:
            report.add(f"variable '{var.name}' has duplicate state labels")

    seen_edges = set()
    for parent, child in dag.edges:
        if parent not in seen_names or child not in seen_names:
            report.add(f"edge {parent} -> {child} references an unknown variable")
        if parent == child:
            report.add(f"self-edge on '{parent}'")
        if (parent, child) in seen_edges:
            report.add(f"duplicate edge {parent} -> {child}")
        seen_edges.add((parent, child))

    graph = nx.DiGraph()
    graph.add_nodes_from(seen_names)
    graph.add_edges_from((p, c) for p, c in seen_edges if p != c)
    if not nx.is_directed_acyclic_graph(graph):
        cycle = nx.find_cycle(graph)
        report.add(f"directed cycle: {' -> '.join(p for p, _ in cycle)} -> {cycle[0][0]}")

    for name in net.cpts:
        if name not in seen_names:
            report.add(f"CPT for unknown variable '{name}'")

    for var in dag.variables:
        cpt = net.cpts.get(var.name)
        if cpt is None:
            report.add(f"missing CPT for '{var.name}'")
            continue
        expected_parents = set(dag.parents(var.name))
        if len(set(cpt.parents)) != len(cpt.parents):
            report.add(f"CPT of '{var.name}' lists a parent twice")
        if set(cpt.parents) != expected_parents:
            report.add(
                f"CPT parents of '{var.name}' {sorted(cpt.parents)} do not match DAG in-edges {sorted(expected_parents)}"
            )
            continue
        expected_shape = tuple(dag.variable(p).cardinality for p in cpt.parents) + (var.cardinality,)
        if cpt.table.shape != expected_shape:
            expected_rows = int(np.prod(expected_shape[:-1]))
            report.add(
                f"CPT of '{var.name}' has shape {cpt.table.shape}, expected {expected_shape} ({expected_rows} rows)"
            )
            continue
        rows = cpt.rows()
        if not np.all(np.isfinite(rows)) or np.any(rows < 0.0) or np.any(rows > 1.0):
            report.add(f"CPT of '{var.name}' has entries outside [0, 1]")
        sums = rows.sum(axis=1)
        for index in np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOLERANCE):
            report.add(f"CPT row {int(index)} of '{var.name}' sums to {sums[index]:.12g}, not 1")
    return report


# Definition <-> network conversion

def dag_from_definition(definition: NetworkDefinition) -> Dag:
    variables = tuple(Variable(v.name, tuple(str(s) for s in v.states)) for v in definition.variables)
    return Dag(variables=variables, edges=tuple((str(p), str(c)) for p, c in definition.edges))


def network_from_definition(definition: NetworkDefinition) -> BayesianNetwork:
    """
    Build and validate a network from its structured-text definition.

    Raises:
        ConfigError: If CPTs are missing, malformed or the network is invalid
    """
    dag = dag_from_definition(definition)
    cpts = {}
    for name, cpt_def in definition.cpts.items():
        parents = tuple(cpt_def.parents)
        try:
            shape = tuple(dag.variable(p).cardinality for p in parents) + (dag.variable(name).cardinality,)
            table = np.asarray(cpt_def.table, dtype=float).reshape(shape)
        except (InvalidInputError, ValueError) as e:
            raise ConfigError(f"CPT of '{name}' cannot be read: {getattr(e, 'detail', e)}")
        cpts[name] = Cpt(child=name, parents=parents, table=table)
    net = BayesianNetwork(dag=dag, cpts=cpts, name=definition.name)
    report = validate_network(net)
    if not report.ok:
        raise ConfigError("invalid network: " + "; ".join(report.violations))
    return net


def network_to_definition(net: BayesianNetwork, description: Optional[str] = None) -> NetworkDefinition:
    return NetworkDefinition(
        name=net.name,
        description=description,
        variables=[VariableDefinition(name=v.name, states=list(v.states)) for v in net.dag.variables],
        edges=[tuple(e) for e in net.dag.edges],
        cpts={
            name: CptDefinition(parents=list(net.cpt(name).parents), table=net.cpt(name).rows().tolist())
            for name in net.names
        },
    )


# Encoding

def encode_records(dag: Dag, records: Sequence[Mapping[str, Optional[str]]]) -> np.ndarray:
    """Convert label records to a code table; absent or empty labels become MISSING."""
    codes = np.full((len(records), len(dag.names)), MISSING, dtype=np.int64)
    for row, record in enumerate(records):
        for col, name in enumerate(dag.names):
            label = record.get(name)
            if label is not None and label != "":
                codes[row, col] = dag.variable(name).index(label)
    return codes


def decode_row(dag: Dag, row: Sequence[int]) -> Dict[str, Optional[str]]:
    return {
        name: (dag.variable(name).states[int(code)] if code != MISSING else None)
        for name, code in zip(dag.names, row)
    }


def row_to_observation(dag: Dag, row: Sequence[int]) -> Dict[str, int]:
    return {name: int(code) for name, code in zip(dag.names, row) if code != MISSING}


def _as_codes(dag: Dag, data: DataTable) -> np.ndarray:
    if isinstance(data, np.ndarray):
        codes = np.asarray(data, dtype=np.int64)
        if codes.ndim != 2 or codes.shape[1] != len(dag.names):
            raise InvalidInputError(
                f"data has shape {codes.shape}, expected (rows, {len(dag.names)}) for variables {list(dag.names)}"
            )
    else:
        codes = np.full((len(data), len(dag.names)), MISSING, dtype=np.int64)
        for row, obs in enumerate(data):
            for name, state in obs.items():
                codes[row, dag.position(name)] = state
    cards = np.array([v.cardinality for v in dag.variables])
    bad = (codes < MISSING) | (codes >= cards)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise InvalidInputError(
            f"state index {codes[row, col]} out of range for {dag.names[col]}", row=int(row), column=dag.names[col]
        )
    return codes


def _check_evidence(net: BayesianNetwork, evidence: Observation) -> Dict[str, int]:
    checked = {}
    for name in sorted(evidence, key=net.dag.position):
        state = int(evidence[name])
        if not 0 <= state < net.variable(name).cardinality:
            raise InvalidInputError(f"state index {state} out of range for {name}")
        checked[name] = state
    return checked


# Variable elimination

@dataclass
class Factor:
    """Non-negative table over a tuple of variables."""
    scope: Tuple[str, ...]
    values: np.ndarray

    def aligned(self, scope: Sequence[str]) -> np.ndarray:
        """Values transposed and reshaped to broadcast over ``scope``."""
        order = sorted(range(len(self.scope)), key=lambda k: scope.index(self.scope[k]))
        values = np.transpose(self.values, order)
        shape = [1] * len(scope)
        for k in order:
            shape[scope.index(self.scope[k])] = self.values.shape[k]
        return values.reshape(shape)

    def multiply(self, other: "Factor") -> "Factor":
        scope = self.scope + tuple(v for v in other.scope if v not in self.scope)
        return Factor(scope, self.aligned(scope) * other.aligned(scope))

    def sum_out(self, name: str) -> "Factor":
        axis = self.scope.index(name)
        return Factor(self.scope[:axis] + self.scope[axis + 1:], self.values.sum(axis=axis))

    def reduce(self, evidence: Mapping[str, int]) -> "Factor":
        if not any(v in evidence for v in self.scope):
            return self
        index = tuple(evidence[v] if v in evidence else slice(None) for v in self.scope)
        return Factor(tuple(v for v in self.scope if v not in evidence), self.values[index])


def _cpt_factors(net: BayesianNetwork) -> List[Factor]:
    return [Factor(cpt.parents + (name,), cpt.table) for name, cpt in ((n, net.cpt(n)) for n in net.names)]


def _min_fill_order(factors: Sequence[Factor], hidden: Sequence[str], rank: Mapping[str, int]) -> List[str]:
    """Greedy min-fill elimination order; ties go to the earlier-declared variable."""
    graph = nx.Graph()
    graph.add_nodes_from(hidden)
    for f in factors:
        scope = [v for v in f.scope if v in graph]
        for i, a in enumerate(scope):
            for b in scope[i + 1:]:
                graph.add_edge(a, b)
    order = []
    while graph.number_of_nodes():
        def fill(v):
            nbrs = list(graph.neighbors(v))
            return sum(1 for i, a in enumerate(nbrs) for b in nbrs[i + 1:] if not graph.has_edge(a, b))
        best = min(graph.nodes, key=lambda v: (fill(v), rank[v]))
        nbrs = list(graph.neighbors(best))
        for i, a in enumerate(nbrs):
            for b in nbrs[i + 1:]:
                graph.add_edge(a, b)
        graph.remove_node(best)
        order.append(best)
    return order


def _eliminate(net: BayesianNetwork, keep: Sequence[str], evidence: Mapping[str, int]) -> np.ndarray:
    """Unnormalized P(keep, evidence) with axes in ``keep`` order."""
    factors = [f.reduce(evidence) for f in _cpt_factors(net)]
    rank = {name: k for k, name in enumerate(net.names)}
    hidden = [v for v in net.names if v not in evidence and v not in keep]
    for var in _min_fill_order(factors, hidden, rank):
        related = [f for f in factors if var in f.scope]
        if not related:
            continue
        product = reduce(Factor.multiply, related)
        factors = [f for f in factors if var not in f.scope] + [product.sum_out(var)]
    result = reduce(Factor.multiply, factors, Factor((), np.array(1.0)))
    return result.aligned(tuple(keep)) if keep else np.asarray(result.values)


def joint_query(net: BayesianNetwork, targets: Sequence[str], evidence: Optional[Observation] = None) -> np.ndarray:
    """
    Exact joint posterior P(targets | evidence) by variable elimination.

    Returns:
        Array with one axis per target (in the given order), summing to 1

    Raises:
        ImpossibleEvidenceError: If the evidence has zero probability
    """
    evidence = _check_evidence(net, evidence or {})
    for target in targets:
        net.variable(target)
        if target in evidence:
            raise InvalidInputError(f"query target '{target}' is also in the evidence")
    table = _eliminate(net, list(targets), evidence)
    total = float(table.sum())
    if not total > 0.0 or not math.isfinite(total):
        raise ImpossibleEvidenceError(f"evidence {evidence} has zero probability under the network")
    return table / total


def query(net: BayesianNetwork, target: str, evidence: Optional[Observation] = None) -> np.ndarray:
    """Exact posterior distribution of ``target`` given ``evidence``."""
    return joint_query(net, [target], evidence)


def evidence_probability(net: BayesianNetwork, evidence: Optional[Observation] = None) -> float:
    """P(evidence) by summing every other variable out."""
    evidence = _check_evidence(net, evidence or {})
    return float(_eliminate(net, [], evidence))


def joint_probability(net: BayesianNetwork, assignment: Observation) -> float:
    """Product of CPT entries for a complete assignment."""
    prob = 1.0
    for name in net.names:
        cpt = net.cpt(name)
        prob *= float(cpt.table[tuple(assignment[p] for p in cpt.parents) + (assignment[name],)])
    return prob


def log_likelihood(net: BayesianNetwork, data: DataTable) -> float:
    """Observed-data log-likelihood; missing cells are summed out per row."""
    codes = _as_codes(net.dag, data)
    patterns, weights = np.unique(codes, axis=0, return_counts=True)
    total = 0.0
    for pattern, weight in zip(patterns, weights):
        p = evidence_probability(net, row_to_observation(net.dag, pattern))
        total += weight * (math.log(p) if p > 0 else -math.inf)
    return total


# Parameter learning

def _normalize_counts(counts: np.ndarray, smoothing: float) -> np.ndarray:
    card = counts.shape[-1]
    denom = counts.sum(axis=-1, keepdims=True) + smoothing * card
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = (counts + smoothing) / denom
    return np.where(denom > 0, probs, 1.0 / card)


def _family_shape(dag: Dag, name: str) -> Tuple[int, ...]:
    return tuple(dag.variable(p).cardinality for p in dag.parents(name)) + (dag.variable(name).cardinality,)


def fit_mle(dag: Dag, data: DataTable, smoothing: float = 1.0) -> BayesianNetwork:
    """
    Learn CPTs from complete data by (smoothed) relative frequencies.

    Each entry is (count + smoothing) / (row_total + smoothing * cardinality);
    rows with no observations and no smoothing fall back to uniform.

    Args:
        dag: Network structure
        data: Complete code table or list of complete observations
        smoothing: Laplace pseudo-count (>= 0)
    """
    if smoothing < 0:
        raise InvalidInputError(f"smoothing must be >= 0, got {smoothing}")
    topological_order(dag)
    codes = _as_codes(dag, data)
    if codes.shape[0] == 0:
        raise InvalidInputError("training data is empty")
    if (codes == MISSING).any():
        row, col = np.argwhere(codes == MISSING)[0]
        raise InvalidInputError(
            "maximum likelihood needs complete data; use EM for missing cells", row=int(row), column=dag.names[col]
        )
    cpts = {}
    for name in dag.names:
        columns = [dag.position(p) for p in dag.parents(name)] + [dag.position(name)]
        counts = np.zeros(_family_shape(dag, name))
        np.add.at(counts, tuple(codes[:, c] for c in columns), 1.0)
        cpts[name] = Cpt(child=name, parents=dag.parents(name), table=_normalize_counts(counts, smoothing))
    return BayesianNetwork(dag=dag, cpts=cpts)


@dataclass
class EmResult:
    """Network learned by EM plus its convergence record."""
    network: BayesianNetwork
    log_likelihood: float
    iterations: int
    converged: bool
    history: List[float] = field(default_factory=list)


def _initial_em_network(dag: Dag, rng: np.random.Generator) -> BayesianNetwork:
    cpts = {}
    for name in dag.names:
        shape = _family_shape(dag, name)
        table = (1.0 / shape[-1]) * (1.0 + 0.01 * rng.uniform(-1.0, 1.0, size=shape))
        cpts[name] = Cpt(child=name, parents=dag.parents(name), table=table / table.sum(axis=-1, keepdims=True))
    return BayesianNetwork(dag=dag, cpts=cpts)


def fit_em(
    dag: Dag,
    data: DataTable,
    max_iter: int = 200,
    tol: float = 1e-6,
    smoothing: float = 1.0,
    seed: int = 0,
) -> EmResult:
    """
    Learn CPTs from data with missing cells by Expectation-Maximization.

    The E-step computes, for every distinct row pattern, the exact joint
    posterior over its missing variables and accumulates expected family
    counts; the M-step is the smoothed count normalization of ``fit_mle``.
    With ``smoothing > 0`` the tracked objective includes the Dirichlet
    pseudo-count term (the quantity EM increases); with 0 it is the plain
    observed-data log-likelihood.

    Args:
        dag: Network structure
        data: Code table with MISSING cells, or list of partial observations
        max_iter: Iteration cap (>= 1)
        tol: Convergence threshold on the objective change (> 0)
        smoothing: Laplace pseudo-count (>= 0)
        seed: Seed of the +-1% jitter on the uniform initial CPTs

    Raises:
        InvalidInputError: On empty data, all-missing columns or bad settings
        NumericalFailureError: If the log-likelihood becomes non-finite
    """
    if max_iter < 1:
        raise InvalidInputError("max_iter must be >= 1")
    if not tol > 0:
        raise InvalidInputError("tol must be > 0")
    if smoothing < 0:
        raise InvalidInputError(f"smoothing must be >= 0, got {smoothing}")
    topological_order(dag)
    codes = _as_codes(dag, data)
    if codes.shape[0] == 0:
        raise InvalidInputError("training data is empty")
    for col, name in enumerate(dag.names):
        if (codes[:, col] == MISSING).all():
            raise InvalidInputError(f"variable '{name}' is never observed", column=name)

    patterns, weights = np.unique(codes, axis=0, return_counts=True)
    net = _initial_em_network(dag, np.random.default_rng(seed))
    history: List[float] = []
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        counts = {name: np.zeros(_family_shape(dag, name)) for name in dag.names}
        loglik = 0.0
        for pattern, weight in zip(patterns, weights):
            evidence = row_to_observation(dag, pattern)
            missing = [n for n in dag.names if n not in evidence]
            joint = _eliminate(net, missing, evidence)
            p_evidence = float(joint.sum())
            if not p_evidence > 0.0 or not math.isfinite(p_evidence):
                raise NumericalFailureError("observed-data likelihood is not finite", iteration=iteration)
            loglik += weight * math.log(p_evidence)
            posterior = joint / p_evidence
            for name in dag.names:
                family = dag.parents(name) + (name,)
                hidden = [v for v in family if v not in evidence]
                index = tuple(evidence[v] if v in evidence else slice(None) for v in family)
                if not hidden:
                    counts[name][index] += weight
                    continue
                drop = tuple(k for k, v in enumerate(missing) if v not in hidden)
                marginal = posterior.sum(axis=drop) if drop else posterior
                remaining = [v for v in missing if v in hidden]
                marginal = np.transpose(marginal, [remaining.index(v) for v in hidden])
                counts[name][index] += weight * marginal
        objective = loglik
        if smoothing > 0:
            objective += smoothing * sum(float(np.log(net.cpt(n).table).sum()) for n in dag.names)
        if not math.isfinite(objective):
            raise NumericalFailureError("EM objective is not finite", iteration=iteration)
        history.append(objective)
        logger.debug(f"EM iteration {iteration}: objective={objective:.6f}")
        net = BayesianNetwork(
            dag=dag,
            cpts={n: Cpt(child=n, parents=dag.parents(n), table=_normalize_counts(counts[n], smoothing)) for n in dag.names},
        )
        if len(history) > 1 and abs(history[-1] - history[-2]) < tol:
            converged = True
            break

    final = log_likelihood(net, codes)
    if not math.isfinite(final):
        raise NumericalFailureError("final log-likelihood is not finite", iteration=iteration)
    logger.info(f"EM finished after {iteration} iterations (converged={converged}, loglik={final:.4f})")
    return EmResult(network=net, log_likelihood=final, iterations=iteration, converged=converged, history=history)


# Sampling

def _draw(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF categorical draws; ``probs`` rows align with uniforms ``u``."""
    cum = np.cumsum(probs, axis=-1)
    return np.minimum((cum <= u[..., None]).sum(axis=-1), probs.shape[-1] - 1)


def sample_forward(net: BayesianNetwork, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Ancestral sampling of ``n`` complete rows in topological order.

    Returns:
        Code table of shape (n, number of variables)
    """
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    codes = np.zeros((n, len(net.names)), dtype=np.int64)
    for name in net.order:
        cpt = net.cpt(name)
        parent_codes = tuple(codes[:, net.dag.position(p)] for p in cpt.parents)
        probs = cpt.table[parent_codes] if parent_codes else np.broadcast_to(cpt.table, (n, cpt.table.shape[-1]))
        codes[:, net.dag.position(name)] = _draw(probs, rng.random(n))
    return codes


def sample_conditional(net: BayesianNetwork, evidence: Optional[Observation], rng: np.random.Generator) -> np.ndarray:
    """
    Draw one complete record exactly from P(. | evidence).

    Variables are drawn one at a time in topological order from their exact
    posterior given the evidence and the draws so far. Without evidence this
    is plain ancestral sampling.

    Raises:
        ImpossibleEvidenceError: If the evidence has zero probability
    """
    evidence = _check_evidence(net, evidence or {})
    if not evidence:
        return sample_forward(net, 1, rng)[0]
    if not evidence_probability(net, evidence) > 0.0:
        raise ImpossibleEvidenceError(f"evidence {evidence} has zero probability under the network")
    assigned = dict(evidence)
    for name in net.order:
        if name in assigned:
            continue
        probs = query(net, name, assigned)
        assigned[name] = int(_draw(probs, np.array(rng.random())))
    return np.array([assigned[name] for name in net.names], dtype=np.int64)


def sample_gibbs(
    net: BayesianNetwork,
    evidence: Optional[Observation],
    n: int,
    rng: np.random.Generator,
    burn_in: int = 500,
    thin: int = 1,
) -> np.ndarray:
    """
    Gibbs sampling with evidence variables clamped.

    Each sweep updates every free variable from its full conditional over the
    Markov blanket (its own CPT times its children's CPTs). The chain starts
    from an exact conditional draw, so it never starts in a zero-probability
    state.

    Returns:
        Code table of shape (n, number of variables) of post-burn-in, thinned samples
    """
    if n < 1 or thin < 1 or burn_in < 0:
        raise InvalidInputError("n and thin must be >= 1 and burn_in >= 0")
    state = sample_conditional(net, evidence, rng)
    clamped = _check_evidence(net, evidence or {})
    free = [name for name in net.order if name not in clamped]
    position = {name: net.dag.position(name) for name in net.names}

    blanket_factors = {}
    for name in free:
        tables = []
        blanket = markov_blanket(net.dag, name)
        owners = [name] + [v for v in net.order if v in blanket and name in net.dag.parents(v)]
        for owner in owners:
            cpt = net.cpt(owner)
            tables.append((cpt.table, [position[v] for v in cpt.parents + (owner,)], (cpt.parents + (owner,)).index(name)))
        blanket_factors[name] = tables

    samples = np.zeros((n, len(net.names)), dtype=np.int64)
    kept = 0
    sweep = 0
    while kept < n:
        for name in free:
            weights = np.ones(net.variable(name).cardinality)
            for table, columns, axis in blanket_factors[name]:
                index = [state[c] for c in columns]
                index[axis] = slice(None)
                weights = weights * table[tuple(index)]
            weights = weights / weights.sum()
            state[position[name]] = int(_draw(weights, np.array(rng.random())))
        sweep += 1
        if sweep > burn_in and (sweep - burn_in) % thin == 0:
            samples[kept] = state
            kept += 1
    return samples
