"""
Average consensus over an undirected peer graph

Synchronous rounds x <- W x with Metropolis weights; the mean squared
dispersion of the local estimates around their mean is both the progress
metric and the stop condition. The mean squared pairwise difference is twice
the dispersion (`mse_dispersion(..., pairwise=True)`).
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd

from fusion_monitor.core.errors import DimensionMismatchError, DisconnectedGraphError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CommGraph:
    """n agents labelled 0..n-1 and their undirected links"""

    n: int
    edges: FrozenSet[Tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one agent")
        normalized = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop on agent {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) references an unknown agent")
            normalized.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(normalized))

    @classmethod
    def complete(cls, n: int) -> "CommGraph":
        return cls.from_networkx(nx.complete_graph(n))

    @classmethod
    def path(cls, n: int) -> "CommGraph":
        return cls.from_networkx(nx.path_graph(n))

    @classmethod
    def from_networkx(cls, graph: nx.Graph) -> "CommGraph":
        graph = nx.convert_node_labels_to_integers(graph, ordering="sorted")
        return cls(n=graph.number_of_nodes(), edges=frozenset(graph.edges()))

    @classmethod
    def random_connected(cls, n: int, p: float, rng: np.random.Generator) -> "CommGraph":
        """Erdos-Renyi graph redrawn until connected"""
        while True:
            graph = nx.gnp_random_graph(n, p, seed=int(rng.integers(2**31)))
            if nx.is_connected(graph):
                return cls.from_networkx(graph)

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(sorted(self.edges))
        return graph

    @property
    def is_connected(self) -> bool:
        return nx.is_connected(self.to_networkx())

    def degrees(self) -> np.ndarray:
        degree = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            degree[i] += 1
            degree[j] += 1
        return degree


@dataclass(frozen=True, eq=False)
class ConsensusState:
    """Local estimates of every agent after `iteration` rounds"""

    estimates: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.estimates, dtype=float)).reshape(-1)
        if values.size < 1:
            raise ValueError("at least one estimate is required")
        if self.iteration < 0:
            raise ValueError("iteration must be non-negative")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "estimates", values)

    @property
    def mean(self) -> float:
        return float(np.mean(self.estimates))


@dataclass(frozen=True, eq=False)
class ConsensusResult:
    estimates: np.ndarray
    iterations: int
    mse_history: List[float]
    converged: bool

    @property
    def agreed_value(self) -> float:
        return float(np.mean(self.estimates))


def metropolis_weights(graph: CommGraph) -> np.ndarray:
    """
    Symmetric doubly stochastic weights

    W_ij = 1 / (1 + max(d_i, d_j)) on edges, W_ii = 1 - sum_j W_ij.
    """
    if not graph.is_connected:
        raise DisconnectedGraphError(f"peer graph of {graph.n} agents is not connected")
    degree = graph.degrees()
    W = np.zeros((graph.n, graph.n))
    for i, j in graph.edges:
        weight = 1.0 / (1.0 + max(degree[i], degree[j]))
        W[i, j] = weight
        W[j, i] = weight
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return W


def consensus_step(state: ConsensusState, W: np.ndarray) -> ConsensusState:
    """One synchronous averaging round"""
    if W.shape != (state.estimates.size, state.estimates.size):
        raise DimensionMismatchError(
            f"weights are {W.shape[0]}x{W.shape[1]} but there are {state.estimates.size} agents"
        )
    return ConsensusState(estimates=W @ state.estimates, iteration=state.iteration + 1)


def mse_dispersion(state: ConsensusState, pairwise: bool = False) -> float:
    """Mean squared deviation of the estimates from their mean (x2 if pairwise)"""
    x = state.estimates
    dispersion = float(np.mean((x - np.mean(x)) ** 2))
    return 2.0 * dispersion if pairwise else dispersion


def run_consensus(
    initial: ConsensusState,
    graph: CommGraph,
    tol: float = 1e-9,
    max_iter: int = 1000,
    weights: Optional[np.ndarray] = None,
) -> ConsensusResult:
    """
    Iterate until the dispersion drops below `tol` or `max_iter` rounds

    The history holds the dispersion before the first round and after each
    round. Hitting max_iter returns converged=False instead of raising.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if initial.estimates.size != graph.n:
        raise DimensionMismatchError(
            f"{initial.estimates.size} estimates for a graph of {graph.n} agents"
        )

    W = metropolis_weights(graph) if weights is None else weights
    state = initial
    history = [mse_dispersion(state)]
    while history[-1] >= tol and state.iteration - initial.iteration < max_iter:
        state = consensus_step(state, W)
        history.append(mse_dispersion(state))

    converged = history[-1] < tol
    rounds = state.iteration - initial.iteration
    if not converged:
        logger.warning("consensus did not converge in %d rounds (mse=%.3g)", rounds, history[-1])
    return ConsensusResult(
        estimates=state.estimates,
        iterations=rounds,
        mse_history=history,
        converged=converged,
    )


def mse_frame(history: Sequence[float]) -> pd.DataFrame:
    return pd.DataFrame({"iteration": np.arange(len(history)), "mse": list(history)})


def write_mse_csv(path, history: Sequence[float]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mse_frame(history).to_csv(path, index=False, encoding="utf-8")
    return path


def graph_from_edges(n: int, edges: Iterable[Sequence[int]]) -> CommGraph:
    return CommGraph(n=n, edges=frozenset((int(i), int(j)) for i, j in edges))
