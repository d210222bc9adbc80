"""Corpus to base graph: chunking, extraction, embedding, entity resolution."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from hiergraph.graph import Chunk, Entity, EntityGraph, InvariantError, Relation
from hiergraph.providers import Discriminator, Embedder, Extractor, ProviderError
from hiergraph.text import Tokenizer, normalize_name, whitespace_tokens

log = logging.getLogger(__name__)

CHUNK_SIZE = 600
CHUNK_OVERLAP = 100
# Above this many entities, resolution candidates come from a top-k neighbour
# search instead of all pairs.
ALL_PAIRS_LIMIT = 10_000
NEIGHBOURS = 50


@dataclass(frozen=True)
class ResolutionParams:
    tau: float = 0.95
    use_discriminator: bool = True

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")


def chunk_spans(n_tokens: int, size: int = CHUNK_SIZE, overlap: int = CHUNK_OVERLAP) -> list[tuple[int, int]]:
    if not 0 <= overlap < size:
        raise ValueError(f"need 0 <= overlap < size, got overlap={overlap}, size={size}")
    if n_tokens < 1:
        raise ValueError("document has no tokens")
    stride = size - overlap
    spans = []
    start = 0
    while True:
        end = min(start + size, n_tokens)
        spans.append((start, end))
        if end == n_tokens:
            return spans
        start += stride


def chunk_text(doc: str, doc_id: str, size: int = CHUNK_SIZE, overlap: int = CHUNK_OVERLAP,
               tokenizer: Tokenizer = whitespace_tokens) -> list[Chunk]:
    """Sliding-window chunks of ``size`` tokens advancing by ``size - overlap``."""
    tokens = tokenizer(doc)
    if not tokens:
        raise ValueError(f"document {doc_id!r} is empty")
    return [Chunk(f"{doc_id}#{i:04d}", doc_id, " ".join(tokens[s:e]), (s, e))
            for i, (s, e) in enumerate(chunk_spans(len(tokens), size, overlap))]


def read_corpus(directory) -> list[tuple[str, str]]:
    """(doc_id, text) for each regular file in ``directory``, sorted by name."""
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    docs = [(p.stem, p.read_text(encoding="utf-8")) for p in sorted(root.iterdir())
            if p.is_file() and not p.name.startswith(".")]
    if not docs:
        raise ValueError(f"corpus directory {root} has no documents")
    return docs


def _join_descriptions(parts: Iterable[str]) -> str:
    out: list[str] = []
    for p in parts:
        p = p.strip()
        if p and p not in out:
            out.append(p)
    return " ".join(out)


def build_base_graph(chunks: Sequence[Chunk], extractor: Extractor, embedder: Embedder) -> EntityGraph:
    """Extract every chunk, merge same-name drafts, and embed entity descriptions.

    Entity and relation ids are assigned in order of first appearance.
    """
    if not chunks:
        raise ValueError("build_base_graph needs at least one chunk")
    key_to_id: dict[str, str] = {}
    names: dict[str, str] = {}
    descs: dict[str, list[str]] = {}
    sources: dict[str, set[str]] = {}
    relations: list[Relation] = []
    for chunk in chunks:
        try:
            ent_drafts, rel_drafts = extractor.extract(chunk)
        except ProviderError as exc:
            raise ProviderError(f"extraction failed for chunk {chunk.id}: {exc}") from exc
        for d in ent_drafts:
            key = normalize_name(d.name)
            if key not in key_to_id:
                eid = f"e{len(key_to_id):06d}"
                key_to_id[key] = eid
                names[eid], descs[eid], sources[eid] = d.name, [], set()
            eid = key_to_id[key]
            descs[eid].append(d.description or d.name)
            sources[eid].add(chunk.id)
        for r in rel_drafts:
            src, dst = key_to_id.get(normalize_name(r.src)), key_to_id.get(normalize_name(r.dst))
            if src is None or dst is None:
                raise ProviderError(f"chunk {chunk.id}: relation {r.src!r}->{r.dst!r} names an unextracted entity")
            if src != dst:
                relations.append(Relation(f"r{len(relations):06d}", src, dst, r.description, r.weight))

    ids = list(names)
    texts = [_join_descriptions(descs[eid]) for eid in ids]
    try:
        vectors = embedder.embed(texts) if ids else np.zeros((0, embedder.dim), dtype=np.float32)
    except ProviderError as exc:
        raise ProviderError(f"embedding entity descriptions failed: {exc}") from exc
    entities = [Entity(eid, names[eid], text, frozenset(sources[eid]), vectors[i])
                for i, (eid, text) in enumerate(zip(ids, texts))]
    return EntityGraph.from_parts(entities, relations, chunks)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def candidate_pairs(vectors: np.ndarray, tau: float) -> list[tuple[int, int]]:
    """Index pairs (i < j) whose cosine strictly exceeds ``tau``.

    Similarities are computed and compared in float32, the storage precision
    of embeddings, so a stored cosine of exactly ``tau`` is not a candidate.
    """
    n = vectors.shape[0]
    if n < 2:
        return []
    vecs = np.asarray(vectors, dtype=np.float32)
    threshold = np.float32(tau)
    pairs: set[tuple[int, int]] = set()
    block = 2048
    for start in range(0, n, block):
        sims = vecs[start:start + block] @ vecs.T
        if n > ALL_PAIRS_LIMIT:
            k = min(NEIGHBOURS + 1, n)
            top = np.argpartition(-sims, k - 1, axis=1)[:, :k]
            rows = np.repeat(np.arange(sims.shape[0]), k)
            cols = top.ravel()
            keep = sims[rows, cols] > threshold
            hits = zip(rows[keep] + start, cols[keep])
        else:
            r, c = np.nonzero(sims > threshold)
            hits = zip(r + start, c)
        for i, j in hits:
            if i != j:
                pairs.add((int(min(i, j)), int(max(i, j))))
    return sorted(pairs)


def resolve_entities(graph: EntityGraph, params: ResolutionParams | None,
                     discriminator: Discriminator | None, embedder: Embedder) -> EntityGraph:
    """Merge entities that are near-duplicates by description embedding and,
    when enabled, confirmed by the discriminator.

    Groups are the transitive closure of confirmed pairs. A merged entity keeps
    the smallest id and its name, unions source chunks, concatenates
    descriptions in id order and is re-embedded from that text.
    Relations are re-pointed; self-loops created by a merge are dropped.
    """
    params = params or ResolutionParams()
    if params.use_discriminator and discriminator is None:
        raise ValueError("use_discriminator is set but no discriminator was given")
    ids = list(graph.entities)
    for eid in ids:
        if graph.entities[eid].embedding is None:
            raise InvariantError(f"entity {eid} is not embedded")
    if len(ids) < 2:
        return graph
    vectors = np.vstack([graph.entities[eid].embedding for eid in ids])
    uf = _UnionFind(len(ids))
    for i, j in candidate_pairs(vectors, params.tau):
        if uf.find(i) == uf.find(j):
            continue
        if params.use_discriminator and not discriminator.discriminate(graph.entities[ids[i]], graph.entities[ids[j]]):
            continue
        uf.union(i, j)

    groups: dict[int, list[int]] = {}
    for i in range(len(ids)):
        groups.setdefault(uf.find(i), []).append(i)
    merged_groups = [g for g in groups.values() if len(g) > 1]
    if not merged_groups:
        return graph

    rename: dict[str, str] = {}
    entities = dict(graph.entities)
    to_embed: list[str] = []
    for members in merged_groups:
        member_ids = sorted(ids[i] for i in members)
        keep = member_ids[0]
        parts = [graph.entities[m] for m in member_ids]
        text = _join_descriptions(p.description for p in parts)
        sources = frozenset().union(*(p.source_chunks for p in parts))
        for m in member_ids[1:]:
            rename[m] = keep
            del entities[m]
        entities[keep] = Entity(keep, parts[0].name, text, sources)
        to_embed.append(keep)
    vecs = embedder.embed([entities[eid].description for eid in to_embed])
    for eid, vec in zip(to_embed, vecs):
        e = entities[eid]
        entities[eid] = Entity(e.id, e.name, e.description, e.source_chunks, vec)

    relations = []
    for r in graph.relations:
        src, dst = rename.get(r.src, r.src), rename.get(r.dst, r.dst)
        if src != dst:
            relations.append(Relation(r.id, src, dst, r.description, r.weight))
    log.info("resolved %d entities into %d", len(ids), len(entities))
    return EntityGraph(entities, tuple(relations), graph.chunks)
