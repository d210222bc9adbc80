"""Synthetic indexes for property tests and the pruning benchmark.

Vectors are random unit vectors rather than embeddings of the text, which is
fine for retrieval properties: the search only compares stored vectors with
the query vector and reranks summaries.
"""
from __future__ import annotations

import numpy as np

from hiergraph.graph import Chunk, Community, Entity, EntityGraph, Hierarchy, Relation
from hiergraph.hierarchy import aggregate_representation, community_id
from hiergraph.index import Index

WORDS = ("river", "harbor", "council", "engine", "garden", "archive", "signal", "market", "bridge", "forest",
         "tower", "valley", "museum", "orbit", "canal", "library", "mill", "station", "quarry", "lantern")


def _unit(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((n, dim))
    return (v / np.linalg.norm(v, axis=1, keepdims=True)).astype(np.float32)


def _phrase(rng: np.random.Generator, n: int = 4) -> str:
    return " ".join(rng.choice(WORDS, size=n))


def _split(rng: np.random.Generator, items: list[str], n_groups: int) -> list[list[str]]:
    """Random partition of ``items`` into exactly ``n_groups`` non-empty groups."""
    order = list(rng.permutation(len(items)))
    cuts = sorted(rng.choice(np.arange(1, len(items)), size=n_groups - 1, replace=False)) if n_groups > 1 else []
    bounds = [0, *cuts, len(items)]
    return [sorted(items[order[i]] for i in range(a, b)) for a, b in zip(bounds, bounds[1:])]


def _assemble(entities: list[Entity], relations: list[Relation], member_levels: list[list[list[str]]],
              node_vectors: dict[str, np.ndarray], summaries) -> Index:
    levels: list[list[Community]] = []
    reps: dict[str, np.ndarray] = dict(node_vectors)
    for depth, groups in enumerate(member_levels, start=1):
        level = []
        for i, members in enumerate(groups):
            cid = community_id(depth, i)
            reps[cid] = aggregate_representation([reps[m] for m in members])
            level.append(Community(cid, depth, frozenset(members), summaries(depth, i), reps[cid]))
        levels.append(level)
    chunk = Chunk("synthetic#0000", "synthetic", "synthetic corpus", (0, 2))
    graph = EntityGraph.from_parts(entities, relations, [chunk])
    return Index(graph, Hierarchy.from_levels(levels, node_vectors))


def random_index(rng: np.random.Generator, dim: int = 32, max_entities: int = 50, max_levels: int = 3) -> Index:
    """Random graph of 1..max_entities entities under a 1..max_levels hierarchy."""
    n = int(rng.integers(1, max_entities + 1))
    depth = int(rng.integers(1, max_levels + 1))
    ids = [f"e{i:06d}" for i in range(n)]
    vecs = _unit(rng, n, dim)
    node_vecs = _unit(rng, n, dim)
    entities = [Entity(eid, f"Entity {i}", _phrase(rng), frozenset({"synthetic#0000"}), vecs[i])
                for i, eid in enumerate(ids)]
    relations = []
    for _ in range(int(rng.integers(0, 2 * n + 1))):
        a, b = rng.choice(n, size=2)
        if a != b:
            relations.append(Relation(f"r{len(relations):06d}", ids[a], ids[b], _phrase(rng, 6),
                                      float(rng.uniform(0.5, 2.0))))
    member_levels = []
    current = ids
    for _ in range(depth):
        groups = _split(rng, current, int(rng.integers(1, len(current) + 1)))
        member_levels.append(groups)
        current = [community_id(len(member_levels), i) for i in range(len(groups))]
    texts = {}

    def summary(level: int, i: int) -> str:
        return texts.setdefault((level, i), _phrase(rng, 8))

    return _assemble(entities, relations, member_levels,
                     {eid: node_vecs[i] for i, eid in enumerate(ids)}, summary)


def balanced_index(dim: int = 64, n_top: int = 20, branching: int = 10, leaf_size: int = 50,
                   seed: int = 0) -> Index:
    """Two-level index: ``n_top`` top communities, each with ``branching``
    level-1 communities of ``leaf_size`` entities."""
    rng = np.random.default_rng(seed)
    n_mid = n_top * branching
    n = n_mid * leaf_size
    ids = [f"e{i:06d}" for i in range(n)]
    vecs = _unit(rng, n, dim)
    entities = [Entity(eid, f"Entity {i}", f"entity {i} of group {i // leaf_size}",
                       frozenset({"synthetic#0000"}), vecs[i]) for i, eid in enumerate(ids)]
    relations = [Relation(f"r{i:06d}", ids[i], ids[i + 1], f"link {i}")
                 for i in range(n - 1) if (i + 1) % leaf_size]
    level1 = [ids[j * leaf_size:(j + 1) * leaf_size] for j in range(n_mid)]
    level2 = [[community_id(1, j) for j in range(t * branching, (t + 1) * branching)] for t in range(n_top)]

    def summary(level: int, i: int) -> str:
        return f"{WORDS[i % len(WORDS)]} topic {i} level {level}"

    return _assemble(entities, relations, [level1, level2],
                     {eid: vecs[i] for i, eid in enumerate(ids)}, summary)
