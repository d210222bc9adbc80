"""On-disk index: JSONL records plus a little-endian float32 embedding blob.

Layout of an index directory::

    manifest            JSON: format version, dimension, counts, sha256 per file,
                        and the (kind, id) order of vectors in embeddings.bin
    entities.jsonl      {"id", "name", "description", "source_chunks"}
    relations.jsonl     {"id", "src", "dst", "description", "weight"}
    chunks.jsonl        {"id", "doc_id", "text", "token_span"}
    communities.jsonl   {"id", "level", "members", "summary", "parent"}
    embeddings.bin      concatenated <f4 vectors of length d

Vector kinds are ``entity`` (description embedding), ``node`` (D(v)) and
``community`` (community representation).
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from hiergraph.graph import Chunk, Community, Entity, EntityGraph, Hierarchy, InvariantError, Relation

FORMAT_VERSION = 1
TEXT_FILES = ("entities.jsonl", "relations.jsonl", "chunks.jsonl", "communities.jsonl")
BLOB = "embeddings.bin"
MANIFEST = "manifest"


class IndexFormatError(Exception):
    """The index directory is missing, malformed, or from another format version."""


class ChecksumError(IndexFormatError):
    pass


def _dumps(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _infer_dim(graph: EntityGraph, hierarchy: Hierarchy) -> int | None:
    for e in graph.entities.values():
        if e.embedding is not None:
            return int(e.embedding.shape[0])
    for v in hierarchy.node_vectors.values():
        return int(v.shape[0])
    for c in hierarchy.communities():
        if c.representation is not None:
            return int(c.representation.shape[0])
    return None


def save_index(graph: EntityGraph, hierarchy: Hierarchy, path, dim: int | None = None) -> None:
    dim = dim if dim is not None else _infer_dim(graph, hierarchy)
    graph.validate(dim)
    hierarchy.validate(graph, dim)

    order: list[list[str]] = []
    vectors: list[np.ndarray] = []
    entity_lines, relation_lines, chunk_lines, community_lines = [], [], [], []
    for e in graph.entities.values():
        entity_lines.append(_dumps({"id": e.id, "name": e.name, "description": e.description,
                                    "source_chunks": sorted(e.source_chunks)}))
        if e.embedding is not None:
            order.append(["entity", e.id])
            vectors.append(e.embedding)
    for r in graph.relations:
        relation_lines.append(_dumps({"id": r.id, "src": r.src, "dst": r.dst,
                                      "description": r.description, "weight": r.weight}))
    for c in graph.chunks.values():
        chunk_lines.append(_dumps({"id": c.id, "doc_id": c.doc_id, "text": c.text,
                                   "token_span": list(c.token_span)}))
    for eid, vec in hierarchy.node_vectors.items():
        order.append(["node", eid])
        vectors.append(vec)
    for c in hierarchy.communities():
        community_lines.append(_dumps({"id": c.id, "level": c.level, "members": c.sorted_members(),
                                       "summary": c.summary, "parent": hierarchy.parent.get(c.id)}))
        if c.representation is not None:
            order.append(["community", c.id])
            vectors.append(c.representation)

    blob = b"".join(np.asarray(v, dtype="<f4").tobytes() for v in vectors)
    contents = {
        "entities.jsonl": entity_lines, "relations.jsonl": relation_lines,
        "chunks.jsonl": chunk_lines, "communities.jsonl": community_lines,
    }
    data = {name: "".join(line + "\n" for line in lines).encode("utf-8") for name, lines in contents.items()}
    data[BLOB] = blob
    manifest = {
        "format_version": FORMAT_VERSION,
        "dim": dim,
        "counts": {"entities": len(entity_lines), "relations": len(relation_lines),
                   "chunks": len(chunk_lines), "communities": len(community_lines),
                   "vectors": len(order), "levels": hierarchy.depth},
        "checksums": {name: _sha256(payload) for name, payload in sorted(data.items())},
        "vector_order": order,
    }
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    for name, payload in data.items():
        tmp = out / (name + ".tmp")
        tmp.write_bytes(payload)
        os.replace(tmp, out / name)
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _read_jsonl(payload: bytes, name: str) -> list[dict]:
    records = []
    for lineno, line in enumerate(payload.decode("utf-8").splitlines(), start=1):
        if line.strip():
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise IndexFormatError(f"{name}:{lineno}: {exc}") from exc
    return records


def load_index(path) -> tuple[EntityGraph, Hierarchy]:
    root = Path(path)
    manifest_path = root / MANIFEST
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no index manifest at {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IndexFormatError(f"unreadable manifest {manifest_path}: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise IndexFormatError(f"index format version {manifest.get('format_version')} != {FORMAT_VERSION}")

    data = {}
    for name in TEXT_FILES + (BLOB,):
        fpath = root / name
        if not fpath.is_file():
            raise FileNotFoundError(f"index file missing: {fpath}")
        data[name] = fpath.read_bytes()
        if _sha256(data[name]) != manifest["checksums"].get(name):
            raise ChecksumError(f"checksum mismatch for {fpath}")

    dim = manifest["dim"]
    order = manifest["vector_order"]
    if dim is None:
        if order:
            raise IndexFormatError("vectors listed but no dimension recorded")
        matrix = np.zeros((0, 0), dtype=np.float32)
    else:
        flat = np.frombuffer(data[BLOB], dtype="<f4")
        if flat.size != len(order) * dim:
            raise ChecksumError(f"{BLOB} holds {flat.size} floats, manifest expects {len(order) * dim}")
        matrix = flat.reshape(len(order), dim).astype(np.float32)
    vectors: dict[tuple[str, str], np.ndarray] = {(kind, oid): matrix[i] for i, (kind, oid) in enumerate(order)}

    chunks = [Chunk(r["id"], r["doc_id"], r["text"], tuple(r["token_span"]))
              for r in _read_jsonl(data["chunks.jsonl"], "chunks.jsonl")]
    entities = [Entity(r["id"], r["name"], r["description"], frozenset(r["source_chunks"]),
                       vectors.get(("entity", r["id"])))
                for r in _read_jsonl(data["entities.jsonl"], "entities.jsonl")]
    relations = [Relation(r["id"], r["src"], r["dst"], r["description"], r["weight"])
                 for r in _read_jsonl(data["relations.jsonl"], "relations.jsonl")]
    graph = EntityGraph.from_parts(entities, relations, chunks)

    records = _read_jsonl(data["communities.jsonl"], "communities.jsonl")
    ids = {r["id"] for r in records}
    by_level: dict[int, list[Community]] = {}
    for r in records:
        by_level.setdefault(r["level"], []).append(
            Community(r["id"], r["level"], frozenset(r["members"]), r["summary"],
                      vectors.get(("community", r["id"]))))
    depth = max(by_level, default=0)
    if sorted(by_level) != list(range(1, depth + 1)):
        raise InvariantError(f"community levels {sorted(by_level)} are not contiguous from 1")
    node_vectors = {oid: vec for (kind, oid), vec in vectors.items() if kind == "node"}
    hierarchy = Hierarchy.from_levels([by_level[lvl] for lvl in range(1, depth + 1)], node_vectors)
    for r in records:
        stated = r.get("parent")
        actual = hierarchy.parent.get(r["id"])
        if stated is not None and stated not in ids:
            raise InvariantError(f"community {r['id']} has dangling parent pointer {stated}")
        if stated != actual:
            raise InvariantError(f"community {r['id']} parent {stated} disagrees with membership ({actual})")

    graph.validate(dim)
    hierarchy.validate(graph, dim)
    return graph, hierarchy


@dataclass(frozen=True, eq=False)
class Index:
    """A loaded graph + hierarchy with cached lookup tables for retrieval."""

    graph: EntityGraph
    hierarchy: Hierarchy

    @classmethod
    def load(cls, path) -> "Index":
        return cls(*load_index(path))

    def save(self, path) -> None:
        save_index(self.graph, self.hierarchy, path)

    @cached_property
    def entity_ids(self) -> list[str]:
        return list(self.graph.entities)

    @cached_property
    def entity_row(self) -> dict[str, int]:
        return {eid: i for i, eid in enumerate(self.entity_ids)}

    @cached_property
    def node_matrix(self) -> np.ndarray:
        """Rows of D(v) in ``entity_ids`` order (falls back to description embeddings)."""
        rows = []
        for eid in self.entity_ids:
            vec = self.hierarchy.node_vectors.get(eid)
            if vec is None:
                vec = self.graph.entities[eid].embedding
            if vec is None:
                raise InvariantError(f"entity {eid} has no vector")
            rows.append(vec)
        return np.vstack(rows).astype(np.float32) if rows else np.zeros((0, 0), dtype=np.float32)

    @cached_property
    def context_matrix(self) -> np.ndarray:
        """Rows of D_ctx(v) = [D(v); D(level-1 parent)]."""
        parents = []
        for eid in self.entity_ids:
            rep = self.hierarchy.level1_parent(eid).representation
            if rep is None:
                raise InvariantError(f"level-1 parent of {eid} has no representation")
            parents.append(rep)
        return np.hstack([self.node_matrix, np.vstack(parents)]).astype(np.float32)

    @cached_property
    def relations_by_entity(self) -> dict[str, list[Relation]]:
        out: dict[str, list[Relation]] = {eid: [] for eid in self.graph.entities}
        for r in self.graph.relations:
            out[r.src].append(r)
            out[r.dst].append(r)
        return out
