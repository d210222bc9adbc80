"""Community hierarchy over the entity graph.

Levels come from the Louvain dendrogram: level 1 partitions entities, and
each further level partitions the community graph of the level below (edge
weight = summed relation weight between communities). Building is split in two
so the summary/vector schedule stays acyclic:

1. ``build_hierarchy`` fixes membership.
2. ``populate_hierarchy`` writes summaries bottom-up from raw descriptions,
   then embeds each entity's context text (description + parent summary) and
   mean-pools those vectors up the tree.
"""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from hiergraph.graph import Community, Entity, EntityGraph, Hierarchy, InvariantError
from hiergraph.louvain import LouvainParams, build_csr, compose, louvain_dendrogram
from hiergraph.providers import Embedder, Generator

log = logging.getLogger(__name__)

MAX_LEVELS = 3
NODE_SEPARATOR = " | "


def community_id(level: int, index: int) -> str:
    return f"c{level}-{index:06d}"


def _level_labels(passes: list[np.ndarray], target_levels: int) -> list[np.ndarray]:
    if len(passes) <= target_levels:
        return list(passes)
    head = passes[: target_levels - 1]
    top = compose(passes[target_levels - 1:], passes[target_levels - 1].shape[0])
    return head + [top]


def build_hierarchy(graph: EntityGraph, params: LouvainParams | None = None,
                    target_levels: int = MAX_LEVELS) -> Hierarchy:
    """Membership-only hierarchy (no summaries or vectors yet).

    Stops early when a level collapses to one community or fails to coarsen;
    ``Hierarchy.depth`` records how many levels were actually built.
    """
    params = params or LouvainParams()
    if not graph.entities:
        raise ValueError("cannot build a hierarchy over an empty graph")
    if target_levels < 1:
        raise ValueError("target_levels must be >= 1")
    ids = list(graph.entities)
    pos = {eid: i for i, eid in enumerate(ids)}
    base = build_csr(len(ids), ((pos[r.src], pos[r.dst], r.weight) for r in graph.relations))
    passes = louvain_dendrogram(base, params) or [np.arange(len(ids))]
    level_labels = _level_labels(passes, target_levels)

    levels: list[list[Community]] = []
    members_of = ids
    for depth, labels in enumerate(level_labels, start=1):
        groups: dict[int, list[str]] = {}
        for node, label in zip(members_of, labels):
            groups.setdefault(int(label), []).append(node)
        level = [Community(community_id(depth, label), depth, frozenset(nodes))
                 for label, nodes in sorted(groups.items())]
        levels.append(level)
        members_of = [c.id for c in level]
    log.info("hierarchy levels: %s", [len(level) for level in levels])
    return Hierarchy.from_levels(levels)


def summary_prompt(c: Community, graph: EntityGraph, summaries: dict[str, str]) -> str:
    if c.level == 1:
        parts = [f"{graph.entities[m].name}: {graph.entities[m].description}" for m in c.sorted_members()]
    else:
        parts = [summaries[m] for m in c.sorted_members()]
    return "\n".join(parts)


def summarize_community(c: Community, generator: Generator, graph: EntityGraph,
                        summaries: dict[str, str] | None = None) -> str:
    """Generate a summary from members ordered by id.

    Level-1 prompts list ``name: description`` per entity; higher levels list
    the members' summaries, which must be present in ``summaries``.
    """
    summary = generator.generate(summary_prompt(c, graph, summaries or {}))
    if not summary.strip():
        raise InvariantError(f"generator returned an empty summary for {c.id}")
    return summary


def aggregate_representation(child_vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Componentwise mean of the children's vectors, not re-normalized."""
    if len(child_vectors) == 0:
        raise ValueError("cannot aggregate an empty set of children")
    dims = {np.shape(v) for v in child_vectors}
    if len(dims) != 1:
        raise ValueError(f"child vectors differ in shape: {sorted(dims)}")
    stacked = np.asarray(child_vectors, dtype=np.float64)
    return stacked.mean(axis=0).astype(np.float32)


def node_representation(v: Entity, hierarchy: Hierarchy, separator: str = NODE_SEPARATOR,
                        summaries: dict[str, str] | None = None) -> str:
    """Entity description followed by its level-1 parent's summary."""
    parent = hierarchy.level1_parent(v.id)
    summary = (summaries or {}).get(parent.id, parent.summary)
    if not summary:
        raise InvariantError(f"parent {parent.id} of entity {v.id} has no summary")
    return v.description + separator + summary


def populate_hierarchy(graph: EntityGraph, hierarchy: Hierarchy, generator: Generator,
                       embedder: Embedder, separator: str = NODE_SEPARATOR) -> Hierarchy:
    summaries: dict[str, str] = {}
    for level in hierarchy.levels:
        for c in level.values():
            summaries[c.id] = summarize_community(c, generator, graph, summaries)

    entity_ids = list(graph.entities)
    texts = [node_representation(graph.entities[eid], hierarchy, separator, summaries) for eid in entity_ids]
    node_vectors = dict(zip(entity_ids, embedder.embed(texts)))

    reps: dict[str, np.ndarray] = {}
    levels: list[list[Community]] = []
    for level in hierarchy.levels:
        out = []
        for c in level.values():
            source = node_vectors if c.level == 1 else reps
            reps[c.id] = aggregate_representation([source[m] for m in c.sorted_members()])
            out.append(Community(c.id, c.level, c.members, summaries[c.id], reps[c.id]))
        levels.append(out)
    return Hierarchy.from_levels(levels, node_vectors)
