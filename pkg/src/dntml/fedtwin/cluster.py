"""Graph partitioning: weak-edge removal to K components and greedy modularity."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ..errors import InvalidParameterError
from .affinity import AffinityGraph

MOVE_TOL = 1e-12


@dataclass
class ClusterPartition:
    labels: np.ndarray
    modularity: float
    method: str = "modularity"
    k: int | None = None
    graph: AffinityGraph | None = field(default=None, repr=False)
    removed: list = field(default_factory=list, repr=False)

    @property
    def n_clusters(self) -> int:
        return int(len(np.unique(self.labels)))

    def members(self):
        return [np.flatnonzero(self.labels == c) for c in range(self.n_clusters)]

    def to_json(self, path=None) -> str:
        text = json.dumps({str(i): int(c) for i, c in enumerate(self.labels)}, indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @staticmethod
    def labels_from_json(text: str) -> np.ndarray:
        d = json.loads(text)
        return np.array([d[str(i)] for i in range(len(d))], dtype=np.int64)


def canonical_labels(labels) -> np.ndarray:
    """Relabel so clusters are numbered by first appearance."""
    labels = np.asarray(labels)
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv].astype(np.int64)


def modularity(graph, labels) -> float:
    """Newman modularity of a partition of a weighted graph (0 when edgeless)."""
    A = graph.weights if isinstance(graph, AffinityGraph) else np.asarray(graph, dtype=float)
    labels = np.asarray(labels)
    if labels.shape != (len(A),):
        raise InvalidParameterError("partition must label every node exactly once")
    two_m = A.sum()
    if two_m <= 0:
        return 0.0
    k = A.sum(axis=1)
    q = 0.0
    for c in np.unique(labels):
        idx = labels == c
        q += A[np.ix_(idx, idx)].sum() / two_m - (k[idx].sum() / two_m) ** 2
    return float(q)


def _components(A: np.ndarray) -> tuple[int, np.ndarray]:
    return connected_components(csr_matrix(A > 0), directed=False)


def cluster_fixed_k(graph: AffinityGraph, k: int) -> ClusterPartition:
    """Delete the weakest edge (ties: lexicographic endpoints) until ``k`` components remain."""
    n = graph.n
    if not 1 <= k <= n:
        raise InvalidParameterError(f"K={k} must lie in [1, {n}]")
    A = graph.weights.copy()
    ncomp, labels = _components(A)
    if ncomp > k:
        raise InvalidParameterError(f"graph already has {ncomp} components, more than K={k}")
    removed = []
    for i, j, w in sorted(graph.edges(), key=lambda e: (e[2], e[0], e[1])):
        if ncomp == k:
            break
        A[i, j] = A[j, i] = 0.0
        removed.append((i, j, w))
        ncomp, labels = _components(A)
    labels = canonical_labels(labels)
    return ClusterPartition(labels, modularity(graph, labels), "fixed_k", k, graph, removed)


def _local_moves(A: np.ndarray, trace: list | None) -> np.ndarray:
    """One Louvain level: greedy node moves until a full sweep changes nothing."""
    n = len(A)
    two_m = A.sum()
    m = two_m / 2
    k = A.sum(axis=1)
    comm = np.arange(n)
    tot = k.copy()                     # total degree per community
    moved = True
    while moved:
        moved = False
        for i in range(n):
            ci = comm[i]
            links = np.bincount(comm, weights=A[i], minlength=n)
            links[ci] -= A[i, i]
            tot[ci] -= k[i]
            # gain of joining community c, relative to staying isolated
            gain = links / m - k[i] * tot / (2 * m * m)
            cand = np.flatnonzero(links > 0)
            best, best_gain = ci, gain[ci]
            for c in cand:
                if gain[c] > best_gain + MOVE_TOL:
                    best, best_gain = c, gain[c]
            comm[i] = best
            tot[best] += k[i]
            if best != ci:
                moved = True
        if trace is not None:
            trace.append(modularity(A, comm))
    return canonical_labels(comm)


def cluster_modularity(graph: AffinityGraph, trace: list | None = None,
                       tol: float = 1e-9) -> ClusterPartition:
    """Louvain-style greedy modularity maximisation.

    ``trace`` (optional list) receives the modularity of the aggregated graph
    after every local-move sweep.
    """
    A0 = graph.weights
    n = graph.n
    if A0.sum() <= 0:
        labels = np.arange(n)
        return ClusterPartition(labels, 0.0, "modularity", None, graph)
    labels = np.arange(n)
    A = A0.copy()
    q = modularity(A0, labels)
    while True:
        comm = _local_moves(A, trace)
        new_labels = comm[labels]
        new_q = modularity(A0, new_labels)
        if new_q - q < tol:
            break
        labels, q = new_labels, new_q
        nc = comm.max() + 1
        P = np.zeros((len(A), nc))
        P[np.arange(len(A)), comm] = 1.0
        A = P.T @ A @ P
    labels = canonical_labels(labels)
    return ClusterPartition(labels, modularity(A0, labels), "modularity", None, graph)


def graph_drift(old: AffinityGraph, new: AffinityGraph) -> float:
    """Largest relative change in total weight or in any node's incident weight."""
    def rel(a, b):
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.abs(b - a) / np.abs(a)
        return np.where(a == 0, np.where(b == 0, 0.0, np.inf), r)
    total = rel(old.total_weight, new.total_weight)
    nodes = rel(old.strength(), new.strength())
    return float(max(total.max(), nodes.max()))


def recluster(partition: ClusterPartition, graph: AffinityGraph) -> ClusterPartition:
    if partition.method == "fixed_k":
        return cluster_fixed_k(graph, partition.k)
    return cluster_modularity(graph)


def reform_clusters(old: ClusterPartition, new_graph: AffinityGraph,
                    drift_threshold: float) -> ClusterPartition:
    """Recluster when the graph drifted past ``drift_threshold``; otherwise return ``old``.

    A threshold of 0 always reclusters.
    """
    if drift_threshold < 0:
        raise InvalidParameterError("drift_threshold must be >= 0")
    if old.graph is None:
        raise InvalidParameterError("partition does not carry the graph it was built from")
    if old.graph.n != new_graph.n or len(old.labels) != new_graph.n:
        raise InvalidParameterError("node sets differ between the old and new graph")
    if drift_threshold == 0 or graph_drift(old.graph, new_graph) > drift_threshold:
        return recluster(old, new_graph)
    return old


def rand_index(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    iu = np.triu_indices(len(a), 1)
    same_a = (a[:, None] == a[None, :])[iu]
    same_b = (b[:, None] == b[None, :])[iu]
    return float(np.mean(same_a == same_b))


def planted_partition_graph(sizes, p_in: float, p_out: float, rng: np.random.Generator):
    """Unweighted stochastic block model; returns ``(graph, labels)``."""
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = len(labels)
    same = labels[:, None] == labels[None, :]
    p = np.where(same, p_in, p_out)
    upper = np.triu(rng.random((n, n)) < p, 1)
    A = (upper | upper.T).astype(float)
    return AffinityGraph(A), labels
