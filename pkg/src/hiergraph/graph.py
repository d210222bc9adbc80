"""Entity graph and community hierarchy types.

All types are immutable once built. Vectors are float32 so that what is held
in memory is exactly what the index stores on disk.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

NORM_TOL = 1e-6


class InvariantError(ValueError):
    """A graph or hierarchy invariant does not hold."""


def as_vector(values) -> np.ndarray:
    vec = np.array(values, dtype=np.float32)
    vec.setflags(write=False)
    return vec


def _vec_eq(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()


@dataclass(frozen=True)
class Chunk:
    id: str
    doc_id: str
    text: str
    token_span: tuple[int, int]


@dataclass(frozen=True, eq=False)
class Entity:
    id: str
    name: str
    description: str
    source_chunks: frozenset[str] = frozenset()
    embedding: np.ndarray | None = None

    def __post_init__(self):
        if not self.name.strip():
            raise InvariantError(f"entity {self.id} has an empty name")
        object.__setattr__(self, "source_chunks", frozenset(self.source_chunks))
        if self.embedding is not None:
            object.__setattr__(self, "embedding", as_vector(self.embedding))

    def __eq__(self, other):
        if not isinstance(other, Entity):
            return NotImplemented
        return (self.id, self.name, self.description, self.source_chunks) == (
            other.id, other.name, other.description, other.source_chunks
        ) and _vec_eq(self.embedding, other.embedding)

    __hash__ = None


@dataclass(frozen=True)
class Relation:
    id: str
    src: str
    dst: str
    description: str
    weight: float = 1.0

    def __post_init__(self):
        if not self.weight > 0:
            raise InvariantError(f"relation {self.id} has non-positive weight {self.weight}")


@dataclass(frozen=True)
class EntityGraph:
    entities: Mapping[str, Entity]
    relations: tuple[Relation, ...] = ()
    chunks: Mapping[str, Chunk] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "entities", MappingProxyType(dict(sorted(self.entities.items()))))
        object.__setattr__(self, "relations", tuple(self.relations))
        object.__setattr__(self, "chunks", MappingProxyType(dict(sorted(self.chunks.items()))))

    @classmethod
    def from_parts(cls, entities: Iterable[Entity], relations: Iterable[Relation] = (),
                   chunks: Iterable[Chunk] = ()) -> "EntityGraph":
        return cls({e.id: e for e in entities}, tuple(relations), {c.id: c for c in chunks})

    def __eq__(self, other):
        if not isinstance(other, EntityGraph):
            return NotImplemented
        return (dict(self.entities) == dict(other.entities)
                and self.relations == other.relations
                and dict(self.chunks) == dict(other.chunks))

    def validate(self, dim: int | None = None) -> None:
        for e in self.entities.values():
            missing = e.source_chunks - self.chunks.keys()
            if missing:
                raise InvariantError(f"entity {e.id} cites unknown chunks {sorted(missing)}")
            if e.embedding is not None:
                if dim is not None and e.embedding.shape != (dim,):
                    raise InvariantError(f"entity {e.id} embedding has shape {e.embedding.shape}, expected ({dim},)")
                norm = float(np.linalg.norm(e.embedding.astype(np.float64)))
                if abs(norm - 1.0) > NORM_TOL:
                    raise InvariantError(f"entity {e.id} embedding norm {norm} is not 1")
        for r in self.relations:
            for end in (r.src, r.dst):
                if end not in self.entities:
                    raise InvariantError(f"relation {r.id} references missing entity {end}")
            if r.src == r.dst:
                raise InvariantError(f"relation {r.id} is a self-loop on {r.src}")

    def adjacency(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {eid: set() for eid in self.entities}
        for r in self.relations:
            adj[r.src].add(r.dst)
            adj[r.dst].add(r.src)
        return adj


@dataclass(frozen=True, eq=False)
class Community:
    id: str
    level: int
    members: frozenset[str]
    summary: str = ""
    representation: np.ndarray | None = None

    def __post_init__(self):
        if self.level < 1:
            raise InvariantError(f"community {self.id} has level {self.level} < 1")
        object.__setattr__(self, "members", frozenset(self.members))
        if not self.members:
            raise InvariantError(f"community {self.id} has no members")
        if self.representation is not None:
            object.__setattr__(self, "representation", as_vector(self.representation))

    def __eq__(self, other):
        if not isinstance(other, Community):
            return NotImplemented
        return (self.id, self.level, self.members, self.summary) == (
            other.id, other.level, other.members, other.summary
        ) and _vec_eq(self.representation, other.representation)

    __hash__ = None

    def sorted_members(self) -> list[str]:
        return sorted(self.members)


@dataclass(frozen=True, eq=False)
class Hierarchy:
    """Community forest; ``levels[0]`` holds level-1 communities.

    ``node_vectors`` holds D(v) for each entity (the embedding of its
    context-aware text) once the hierarchy has been populated.
    """

    levels: tuple[Mapping[str, Community], ...] = ()
    node_vectors: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(
            MappingProxyType(dict(sorted(level.items()))) for level in self.levels))
        object.__setattr__(self, "node_vectors", MappingProxyType(
            {k: as_vector(v) for k, v in sorted(self.node_vectors.items())}))
        parent: dict[str, str] = {}
        for level in self.levels:
            for c in level.values():
                for m in c.members:
                    if m in parent:
                        raise InvariantError(f"{m} has two parents: {parent[m]} and {c.id}")
                    parent[m] = c.id
        object.__setattr__(self, "_parent", MappingProxyType(parent))
        object.__setattr__(self, "_by_id", MappingProxyType(
            {cid: c for level in self.levels for cid, c in level.items()}))

    @classmethod
    def from_levels(cls, levels: Iterable[Iterable[Community]],
                    node_vectors: Mapping[str, np.ndarray] | None = None) -> "Hierarchy":
        return cls(tuple({c.id: c for c in level} for level in levels), node_vectors or {})

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def parent(self) -> Mapping[str, str]:
        return self._parent

    @property
    def top(self) -> Mapping[str, Community]:
        return self.levels[-1] if self.levels else MappingProxyType({})

    def community(self, cid: str) -> Community:
        return self._by_id[cid]

    def __contains__(self, cid: str) -> bool:
        return cid in self._by_id

    def communities(self) -> Iterable[Community]:
        for level in self.levels:
            yield from level.values()

    def level_of(self, node_id: str) -> int:
        c = self._by_id.get(node_id)
        return 0 if c is None else c.level

    def children(self, cid: str) -> list[str]:
        """Sub-community ids of ``cid`` (empty for level-1 communities)."""
        c = self._by_id[cid]
        return c.sorted_members() if c.level > 1 else []

    def entities_under(self, cid: str) -> list[str]:
        stack, out = [self._by_id[cid]], []
        while stack:
            c = stack.pop()
            if c.level == 1:
                out.extend(c.members)
            else:
                stack.extend(self._by_id[m] for m in c.members)
        return sorted(out)

    def level1_parent(self, entity_id: str) -> Community:
        try:
            return self._by_id[self._parent[entity_id]]
        except KeyError:
            raise InvariantError(f"entity {entity_id} has no level-1 parent") from None

    def __eq__(self, other):
        if not isinstance(other, Hierarchy):
            return NotImplemented
        return (len(self.levels) == len(other.levels)
                and all(dict(a) == dict(b) for a, b in zip(self.levels, other.levels))
                and self.node_vectors.keys() == other.node_vectors.keys()
                and all(_vec_eq(v, other.node_vectors[k]) for k, v in self.node_vectors.items()))

    __hash__ = None

    def validate(self, graph: EntityGraph, dim: int | None = None) -> None:
        if not self.levels:
            if self.node_vectors:
                raise InvariantError("node vectors present without a hierarchy")
            return
        for depth_idx, level in enumerate(self.levels, start=1):
            if not level:
                raise InvariantError(f"level {depth_idx} is empty")
            for c in level.values():
                if c.level != depth_idx:
                    raise InvariantError(f"community {c.id} stored at level {depth_idx} claims level {c.level}")
                for m in c.members:
                    if depth_idx == 1:
                        if m not in graph.entities:
                            raise InvariantError(f"community {c.id} lists unknown entity {m}")
                    elif m not in self.levels[depth_idx - 2]:
                        raise InvariantError(f"community {c.id} lists {m}, which is not a level-{depth_idx - 1} community")
                if c.representation is not None and dim is not None and c.representation.shape != (dim,):
                    raise InvariantError(f"community {c.id} representation has shape {c.representation.shape}")
                if depth_idx < self.depth and c.id not in self._parent:
                    raise InvariantError(f"community {c.id} at level {depth_idx} has no parent")
        for eid in graph.entities:
            if eid not in self._parent:
                raise InvariantError(f"entity {eid} has no level-1 parent")
        for eid, vec in self.node_vectors.items():
            if eid not in graph.entities:
                raise InvariantError(f"node vector for unknown entity {eid}")
            if dim is not None and vec.shape != (dim,):
                raise InvariantError(f"node vector for {eid} has shape {vec.shape}")
