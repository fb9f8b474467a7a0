"""Consensus module – network topology, Metropolis mixing and the CDQKL training loop.

Every round is synchronous: node ``i`` first mixes the previous-round parameters
of its neighborhood into ``lambda_i``, then takes a gradient step on its private
shard evaluated at ``lambda_i`` (combine-then-adapt). Only parameter vectors
cross node boundaries.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import networkx as nx
import numpy as np

from src.errors import DimensionError, DivergenceError, GraphError
from src.qkernel import (
    AnsatzSpec,
    LabeledDataset,
    cross_kernel,
    grad_param_shift,
    grad_stochastic,
    kernel_matrix,
    local_loss,
)
from src.svm import accuracy, predict, smo_train

logger = logging.getLogger(__name__)

TOPOLOGIES = ("ring", "complete", "star", "line", "explicit")
INIT_RANGE = math.pi / 4

GradientFn = Callable[[AnsatzSpec, LabeledDataset, np.ndarray, np.random.SeedSequence], np.ndarray]


# ── Topology ─────────────────────────────────────────────────────────


@dataclass(frozen=True)
class NetworkGraph:
    """Undirected, connected communication graph over nodes ``0..N-1``."""

    graph: nx.Graph

    @property
    def n_nodes(self) -> int:
        return self.graph.number_of_nodes()

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted((min(a, b), max(a, b)) for a, b in self.graph.edges())

    def degree(self, node: int) -> int:
        return int(self.graph.degree(node))

    def neighborhood(self, node: int) -> set[int]:
        """Neighbors of ``node`` plus the node itself."""
        return set(self.graph.neighbors(node)) | {node}


def build_graph(
    topology: str, n_nodes: int, edges: Sequence[Sequence[int]] | None = None
) -> NetworkGraph:
    """Build a named topology, or validate an explicit edge list."""
    if n_nodes < 2:
        raise GraphError(f"a network needs at least 2 nodes, got {n_nodes}")
    if topology == "ring":
        graph = nx.cycle_graph(n_nodes)
    elif topology == "complete":
        graph = nx.complete_graph(n_nodes)
    elif topology == "star":
        graph = nx.star_graph(n_nodes - 1)
    elif topology == "line":
        graph = nx.path_graph(n_nodes)
    elif topology == "explicit":
        if not edges:
            raise GraphError("explicit topology needs an edge list")
        graph = nx.Graph()
        graph.add_nodes_from(range(n_nodes))
        for edge in edges:
            if len(edge) != 2:
                raise GraphError(f"edge {list(edge)} must name exactly two nodes")
            a, b = int(edge[0]), int(edge[1])
            if a == b:
                raise GraphError(f"self-loop on node {a} is not allowed")
            if not (0 <= a < n_nodes and 0 <= b < n_nodes):
                raise GraphError(f"edge ({a}, {b}) references a node outside 0..{n_nodes - 1}")
            graph.add_edge(a, b)
    else:
        raise GraphError(f"unknown topology {topology!r}; expected one of {', '.join(TOPOLOGIES)}")

    if not nx.is_connected(graph):
        components = sorted(sorted(c) for c in nx.connected_components(graph))
        raise GraphError(f"graph is disconnected: components {components}", components)
    return NetworkGraph(graph)


# ── Mixing matrix ────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class ConsensusMatrix:
    """Doubly stochastic mixing weights ``W``."""

    W: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.W.shape[0])

    def eigenvalue_magnitudes(self) -> np.ndarray:
        """Eigenvalue magnitudes in decreasing order."""
        return np.sort(np.abs(np.linalg.eigvals(self.W)))[::-1]

    @property
    def spectral_radius(self) -> float:
        return float(self.eigenvalue_magnitudes()[0])

    @property
    def sigma2(self) -> float:
        """Second-largest eigenvalue magnitude; sets the averaging contraction rate."""
        return float(self.eigenvalue_magnitudes()[1])

    def max_stochastic_error(self) -> float:
        ones = np.ones(self.n_nodes)
        return float(max(np.max(np.abs(self.W @ ones - 1)), np.max(np.abs(ones @ self.W - 1))))


def metropolis_weights(g: NetworkGraph) -> ConsensusMatrix:
    """Metropolis–Hastings weights ``1 / (1 + max(d_i, d_j))`` on every edge."""
    n = g.n_nodes
    W = np.zeros((n, n))
    degrees = [g.degree(i) for i in range(n)]
    for a, b in g.edges:
        W[a, b] = W[b, a] = 1.0 / (1.0 + max(degrees[a], degrees[b]))
    for i in range(n):
        W[i, i] = 1.0 - (np.sum(W[i]) - W[i, i])
    return ConsensusMatrix(W)


# ── Node state and one round ─────────────────────────────────────────


@dataclass
class NodeState:
    """Parameters, private shard, step size and mixing buffer of one node."""

    node_id: int
    theta: np.ndarray
    shard: LabeledDataset
    eta: float
    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        self.theta = np.asarray(self.theta, dtype=float).copy()
        if self.lam.shape != self.theta.shape:
            self.lam = self.theta.copy()


@dataclass(frozen=True)
class GradMode:
    """``full`` uses the whole shard; ``stochastic`` a seeded subset of ``q`` points."""

    kind: str = "full"
    q: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("full", "stochastic"):
            raise ValueError(f"grad mode must be 'full' or 'stochastic', got {self.kind!r}")
        if self.kind == "stochastic" and (self.q is None or self.q < 1):
            raise ValueError("stochastic grad mode needs q >= 1")


def consensus_mix(thetas: np.ndarray, matrix: ConsensusMatrix) -> np.ndarray:
    """``lambda_i = sum_j w_ij theta_j`` for every node; rows of ``thetas`` are nodes."""
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim != 2 or thetas.shape[0] != matrix.n_nodes:
        raise DimensionError(
            f"expected {matrix.n_nodes} parameter rows, got array of shape {thetas.shape}"
        )
    return matrix.W @ thetas


def disagreement(thetas: np.ndarray) -> float:
    """``sum_i |theta_i - mean(theta)|_2``."""
    thetas = np.asarray(thetas, dtype=float)
    return float(np.sum(np.linalg.norm(thetas - thetas.mean(axis=0), axis=1)))


def default_gradient(mode: GradMode) -> GradientFn:
    if mode.kind == "full":
        return lambda s, shard, theta, seed: grad_param_shift(s, shard, theta)
    q = int(mode.q)  # type: ignore[arg-type]
    return lambda s, shard, theta, seed: grad_stochastic(s, shard, theta, q, seed)


def step_seed(sgd_entropy: int, iteration: int, node_id: int) -> np.random.SeedSequence:
    """Per-node, per-iteration stream so draws do not depend on scheduling."""
    return np.random.SeedSequence(sgd_entropy, spawn_key=(iteration, node_id))


def cdqkl_step(
    states: Sequence[NodeState],
    matrix: ConsensusMatrix,
    spec: AnsatzSpec,
    grad_mode: GradMode = GradMode(),
    rng_seed: int = 0,
    iteration: int = 0,
    gradient: GradientFn | None = None,
    workers: int = 1,
) -> list[NodeState]:
    """Run one synchronous round and return the updated node states."""
    thetas = np.stack([s.theta for s in states])
    if thetas.shape[1] != spec.n_params:
        raise DimensionError(f"node parameters have length {thetas.shape[1]}, expected {spec.n_params}")
    lams = consensus_mix(thetas, matrix)
    grad_fn = gradient or default_gradient(grad_mode)

    def node_gradient(i: int) -> np.ndarray:
        state = states[i]
        return np.asarray(
            grad_fn(spec, state.shard, lams[i], step_seed(rng_seed, iteration, state.node_id)),
            dtype=float,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            grads = list(pool.map(node_gradient, range(len(states))))
    else:
        grads = [node_gradient(i) for i in range(len(states))]

    updated: list[NodeState] = []
    for state, lam, g in zip(states, lams, grads):
        if not np.all(np.isfinite(g)):
            raise DivergenceError(
                f"non-finite gradient on node {state.node_id} at iteration {iteration}",
                node=state.node_id,
                iteration=iteration,
                lam_norm=float(np.linalg.norm(lam)),
                nonfinite_components=int(np.sum(~np.isfinite(g))),
            )
        updated.append(replace(state, theta=lam - state.eta * g, lam=lam.copy()))
    return updated


# ── Full training run ────────────────────────────────────────────────


@dataclass
class NodeMetrics:
    """Table-2 accuracies of one node at one point in training."""

    local_train: float
    local_test: float | None
    whole_train: float
    whole_test: float | None


@dataclass
class TrainingHistory:
    """Loss/disagreement series plus before/after metrics of a CDQKL run."""

    iterations: list[int] = field(default_factory=list)
    node_losses: list[list[float]] = field(default_factory=list)
    global_loss: list[float] = field(default_factory=list)
    disagreement: list[float] = field(default_factory=list)
    before: list[NodeMetrics] = field(default_factory=list)
    after: list[NodeMetrics] = field(default_factory=list)
    initial_thetas: list[list[float]] = field(default_factory=list)
    final_thetas: list[list[float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def initial_theta(spec: AnsatzSpec, seed: int | np.random.SeedSequence) -> np.ndarray:
    """Shared starting point drawn uniformly from ``[-pi/4, pi/4]``."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-INIT_RANGE, INIT_RANGE, size=spec.n_params)


def training_streams(rng_seed: int) -> tuple[np.random.SeedSequence, int]:
    """Split a training seed into the shared-init stream and the gradient-sampling entropy."""
    init_seq, sgd_seq = np.random.SeedSequence(rng_seed).spawn(2)
    return init_seq, int(sgd_seq.generate_state(1)[0])


def central_descent(
    spec: AnsatzSpec,
    dataset: LabeledDataset,
    theta0: np.ndarray,
    eta: float,
    iterations: int,
    grad_mode: GradMode = GradMode(),
    rng_seed: int = 0,
    gradient: GradientFn | None = None,
    on_step: Callable[[int, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Single-node gradient descent on the whole dataset; the centralized baseline."""
    grad_fn = gradient or default_gradient(grad_mode)
    theta = spec.check_theta(theta0).copy()
    for k in range(1, iterations + 1):
        g = np.asarray(grad_fn(spec, dataset, theta, step_seed(rng_seed, k, 0)), dtype=float)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(
                f"non-finite central gradient at iteration {k}",
                node=0,
                iteration=k,
                lam_norm=float(np.linalg.norm(theta)),
                nonfinite_components=int(np.sum(~np.isfinite(g))),
            )
        theta = theta - eta * g
        if on_step is not None:
            on_step(k, theta)
    return theta


def _fit_and_score(
    spec: AnsatzSpec,
    theta: np.ndarray,
    train: LabeledDataset,
    test: LabeledDataset | None,
    C: float,
    tol: float,
) -> tuple[float, float | None]:
    model = smo_train(kernel_matrix(spec, train.features, theta), train.labels, C=C, tol=tol)
    train_acc = accuracy(
        predict(model, cross_kernel(spec, train.features, train.features, theta)), train.labels
    )
    if test is None or len(test) == 0:
        return train_acc, None
    test_acc = accuracy(
        predict(model, cross_kernel(spec, train.features, test.features, theta)), test.labels
    )
    return train_acc, test_acc


def node_metrics(
    spec: AnsatzSpec,
    theta: np.ndarray,
    local_train: LabeledDataset,
    local_test: LabeledDataset | None,
    whole_train: LabeledDataset,
    whole_test: LabeledDataset | None,
    C: float = 1.0,
    tol: float = 1e-3,
) -> NodeMetrics:
    """Local metrics use an SVM fit on the node's shard; whole metrics one fit on the union."""
    lt, lv = _fit_and_score(spec, theta, local_train, local_test, C, tol)
    wt, wv = _fit_and_score(spec, theta, whole_train, whole_test, C, tol)
    return NodeMetrics(lt, lv, wt, wv)


def run_cdqkl(
    spec: AnsatzSpec,
    shards: Sequence[LabeledDataset],
    graph: NetworkGraph,
    eta: float | Sequence[float],
    iterations: int,
    grad_mode: GradMode = GradMode(),
    eval_every: int = 10,
    rng_seed: int = 0,
    *,
    test_shards: Sequence[LabeledDataset] | None = None,
    svm_c: float = 1.0,
    svm_tol: float = 1e-3,
    initial_thetas: np.ndarray | None = None,
    gradient: GradientFn | None = None,
    workers: int = 1,
    with_metrics: bool = True,
    on_step: Callable[[int], None] | None = None,
) -> TrainingHistory:
    """Train every node for ``iterations`` synchronous rounds from a shared seeded start."""
    n = graph.n_nodes
    if len(shards) != n:
        raise DimensionError(f"{len(shards)} shards for a {n}-node network")
    if test_shards is not None and len(test_shards) != n:
        raise DimensionError(f"{len(test_shards)} test shards for a {n}-node network")
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    if eval_every < 1:
        raise ValueError(f"eval_every must be >= 1, got {eval_every}")
    etas = [float(eta)] * n if isinstance(eta, (int, float)) else [float(e) for e in eta]
    if len(etas) != n:
        raise DimensionError(f"{len(etas)} step sizes for a {n}-node network")

    init_seq, sgd_entropy = training_streams(rng_seed)
    if initial_thetas is None:
        start = np.tile(initial_theta(spec, init_seq), (n, 1))
    else:
        start = np.asarray(initial_thetas, dtype=float)
        if start.shape != (n, spec.n_params):
            raise DimensionError(f"initial thetas must have shape {(n, spec.n_params)}, got {start.shape}")

    matrix = metropolis_weights(graph)
    states = [NodeState(i, start[i], shards[i], etas[i]) for i in range(n)]
    history = TrainingHistory(initial_thetas=start.tolist())

    whole_train = LabeledDataset.concat(list(shards))
    whole_test = LabeledDataset.concat(list(test_shards)) if test_shards else None

    def metrics() -> list[NodeMetrics]:
        return [
            node_metrics(
                spec,
                s.theta,
                s.shard,
                test_shards[s.node_id] if test_shards else None,
                whole_train,
                whole_test,
                svm_c,
                svm_tol,
            )
            for s in states
        ]

    def record(k: int) -> None:
        losses = [local_loss(spec, s.shard, s.theta) for s in states]
        history.iterations.append(k)
        history.node_losses.append(losses)
        history.global_loss.append(float(sum(losses)))
        history.disagreement.append(disagreement(np.stack([s.theta for s in states])))
        logger.debug(
            "iteration %d: global loss %.6f, disagreement %.3e",
            k, history.global_loss[-1], history.disagreement[-1],
        )

    if with_metrics:
        history.before = metrics()
    record(0)
    for k in range(1, iterations + 1):
        states = cdqkl_step(
            states, matrix, spec, grad_mode, sgd_entropy, k, gradient=gradient, workers=workers
        )
        if k % eval_every == 0 or k == iterations:
            record(k)
        if on_step is not None:
            on_step(k)
    if with_metrics:
        history.after = metrics()
    history.final_thetas = [s.theta.tolist() for s in states]
    return history
