"""Weighted Louvain community detection with deterministic tie-breaking."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

from hiergraph import kernels


@dataclass(frozen=True)
class LouvainParams:
    gamma: float = 1.0
    seed: int = 0
    max_passes: int = 32
    max_sweeps: int = 1000
    restarts: int = 4
    perturbations: int = 32
    perturb_fraction: float = 0.3

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass(frozen=True)
class CSRGraph:
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.indptr.shape[0] - 1


def _from_coo(n: int, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray) -> CSRGraph:
    if rows.size == 0:
        return CSRGraph(np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0))
    keys = rows.astype(np.int64) * n + cols.astype(np.int64)
    uniq, inverse = np.unique(keys, return_inverse=True)
    summed = np.bincount(inverse, weights=vals, minlength=uniq.size)
    r = uniq // n
    c = uniq % n
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=n), out=indptr[1:])
    return CSRGraph(indptr, c.astype(np.int64), summed.astype(np.float64))


def build_csr(n: int, edges: Iterable[tuple[int, int, float]]) -> CSRGraph:
    """Symmetric adjacency from undirected weighted edges; a self-loop adds 2w to the diagonal."""
    src, dst, w = [], [], []
    for u, v, weight in edges:
        if not weight > 0:
            raise ValueError(f"edge weight must be > 0, got {weight} on ({u}, {v})")
        src.append(u)
        dst.append(v)
        w.append(float(weight))
    src_a = np.asarray(src, dtype=np.int64)
    dst_a = np.asarray(dst, dtype=np.int64)
    w_a = np.asarray(w, dtype=np.float64)
    rows = np.concatenate([src_a, dst_a])
    cols = np.concatenate([dst_a, src_a])
    return _from_coo(n, rows, cols, np.concatenate([w_a, w_a]))


def aggregate(graph: CSRGraph, labels: np.ndarray, n_comm: int) -> CSRGraph:
    """Collapse each community into one node, keeping internal weight on the diagonal."""
    rows = np.repeat(np.arange(graph.n), np.diff(graph.indptr))
    return _from_coo(n_comm, labels[rows], labels[graph.indices], graph.weights)


def renumber(labels: np.ndarray) -> np.ndarray:
    """Relabel to 0..K-1 in order of first appearance over node index."""
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first, kind="stable")
    mapping = np.empty(labels.max() + 1, dtype=np.int64)
    mapping[np.unique(labels)[order]] = np.arange(order.size)
    return mapping[labels]


def node_degree(graph: CSRGraph) -> np.ndarray:
    out = np.zeros(graph.n)
    rows = np.repeat(np.arange(graph.n), np.diff(graph.indptr))
    np.add.at(out, rows, graph.weights)
    return out


def one_level(graph: CSRGraph, params: LouvainParams, rng: np.random.Generator,
              init: np.ndarray | None = None) -> np.ndarray:
    """Local-moving phase on ``graph`` (from singletons unless ``init`` given); returns canonical labels."""
    degree = node_degree(graph)
    order = rng.permutation(graph.n).astype(np.int64)
    init = np.arange(graph.n, dtype=np.int64) if init is None else np.asarray(init, dtype=np.int64)
    labels, _ = kernels.local_moving(
        graph.indptr, graph.indices, graph.weights, degree, init, order,
        float(params.gamma), float(degree.sum()), int(params.max_sweeps),
    )
    return renumber(np.asarray(labels))


def louvain_passes(graph: CSRGraph, params: LouvainParams,
                   rng: np.random.Generator | None = None,
                   init: np.ndarray | None = None) -> list[np.ndarray]:
    """Run one Louvain descent and return one label array per coarsening pass.

    ``passes[0]`` labels the input nodes; ``passes[i]`` labels the communities
    of ``passes[i-1]``. Passes that fail to coarsen are not recorded. ``init``
    seeds the first local-moving phase instead of singletons.
    """
    rng = np.random.default_rng(params.seed) if rng is None else rng
    passes: list[np.ndarray] = []
    current = graph
    for _ in range(params.max_passes):
        if current.n <= 1:
            break
        labels = one_level(current, params, rng, init)
        init = None
        n_comm = int(labels.max()) + 1
        if n_comm == current.n:
            break
        passes.append(labels)
        if n_comm == 1:
            break
        current = aggregate(current, labels, n_comm)
    return passes


def louvain_dendrogram(graph: CSRGraph, params: LouvainParams) -> list[np.ndarray]:
    """Best of ``params.restarts`` seeded descents from singletons, by final modularity."""
    best, best_q = None, -np.inf
    for r in range(params.restarts):
        rng = np.random.default_rng([params.seed, r])
        passes = louvain_passes(graph, params, rng)
        q = modularity(graph, compose(passes, graph.n), params.gamma)
        if q > best_q + kernels.GAIN_TOL:
            best, best_q = passes, q
    return best


def best_partition(graph: CSRGraph, params: LouvainParams) -> np.ndarray:
    """Flat partition: seeded restarts, then perturb-and-descend polishing.

    Each perturbation either reassigns a random fraction of nodes of the
    incumbent or starts from a random 2-4 way split; the result replaces the
    incumbent only on a strict modularity gain.
    """
    best = compose(louvain_dendrogram(graph, params), graph.n)
    best_q = modularity(graph, best, params.gamma)
    rng = np.random.default_rng([params.seed, params.restarts])
    for it in range(params.perturbations if graph.n > 2 else 0):
        if it % 2 == 0:
            init = rng.integers(0, 2 + (it // 2) % 3, graph.n)
        else:
            init = best.copy()
            mask = rng.random(graph.n) < params.perturb_fraction
            init[mask] = rng.integers(0, graph.n, int(mask.sum()))
        labels = compose(louvain_passes(graph, params, rng, renumber(init)), graph.n)
        q = modularity(graph, labels, params.gamma)
        if q > best_q + kernels.GAIN_TOL:
            best, best_q = labels, q
    return renumber(best)


def compose(passes: Sequence[np.ndarray], n: int) -> np.ndarray:
    labels = np.arange(n)
    for p in passes:
        labels = p[labels]
    return labels


def modularity(graph: CSRGraph, labels: np.ndarray, gamma: float = 1.0) -> float:
    return float(kernels.modularity(graph.indptr, graph.indices, graph.weights,
                                    np.asarray(labels, dtype=np.int64), float(gamma)))


def _index_graph(nodes: Sequence[Hashable], weighted_edges) -> tuple[list, CSRGraph]:
    canon = sorted(set(nodes))
    if not canon:
        raise ValueError("louvain_partition needs at least one node")
    pos = {v: i for i, v in enumerate(canon)}
    edges = []
    for u, v, w in weighted_edges:
        if u not in pos or v not in pos:
            raise KeyError(f"edge ({u!r}, {v!r}) references an unknown node")
        edges.append((pos[u], pos[v], w))
    return canon, build_csr(len(canon), edges)


def louvain_partition(nodes, weighted_edges, params: LouvainParams | None = None) -> dict:
    """Partition ``nodes`` by weighted Louvain; returns ``{node: community label}``.

    Nodes are indexed in sorted order and every random choice draws from
    ``params.seed``, so the result is a pure function of the graph and params.
    """
    params = params or LouvainParams()
    canon, graph = _index_graph(nodes, weighted_edges)
    labels = best_partition(graph, params)
    return {v: int(labels[i]) for i, v in enumerate(canon)}


def partition_modularity(nodes, weighted_edges, partition: dict, gamma: float = 1.0) -> float:
    canon, graph = _index_graph(nodes, weighted_edges)
    labels = np.asarray([partition[v] for v in canon], dtype=np.int64)
    return modularity(graph, renumber(labels), gamma)
