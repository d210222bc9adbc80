"""Coarse-to-fine beam search over the community hierarchy, plus the flat
Local Search and map-reduce Global Search baselines.

Deep retrieval runs four phases:

1. score every top-level community summary with the fast reranker, keep top-k;
2. pool the children of the kept communities, score each as
   ``parent summary + "\\n" + child summary`` with the fine reranker, keep a
   global top-k (childless communities pass through, re-scored on their own
   summary);
3. score every entity under the kept communities by cosine between
   ``[q; q]`` and ``[D(v); D(level-1 parent)]``, keep top-m;
4. assemble a context document from the ranked entities and distill it.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from hiergraph.graph import Entity, Hierarchy, InvariantError
from hiergraph.index import Index
from hiergraph.providers import Embedder, Generator, Integrator, ProviderError, Reranker
from hiergraph.text import truncate_tokens

log = logging.getLogger(__name__)

DEFAULT_BEAM = 3
DEFAULT_TOP_M = 10
DEFAULT_BUDGET = 4000
PAIR_SEPARATOR = "\n"


def _ranked(pairs) -> list[tuple[str, float]]:
    return sorted(((i, float(s)) for i, s in pairs), key=lambda p: (-p[1], p[0]))


@dataclass(frozen=True)
class Beam:
    candidates: tuple[tuple[str, float], ...]
    level: int

    @classmethod
    def top_k(cls, scored, k: int, level: int) -> "Beam":
        return cls(tuple(_ranked(scored)[:k]), level)

    @property
    def ids(self) -> list[str]:
        return [cid for cid, _ in self.candidates]

    def __len__(self) -> int:
        return len(self.candidates)


@dataclass(frozen=True)
class RetrievalParams:
    k: int = DEFAULT_BEAM
    m: int = DEFAULT_TOP_M
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.k < 1 or self.m < 1:
            raise ValueError(f"beam width and top-m must be >= 1 (k={self.k}, m={self.m})")


@dataclass
class RetrievalResult:
    entities: list[tuple[str, float]]
    context_document: str = ""
    text: str = ""
    trace: dict[str, list[tuple[str, float]]] = field(default_factory=dict)
    scored_candidate_count: int = 0
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "entities": [[i, s] for i, s in self.entities],
            "text": self.text,
            "context_document": self.context_document,
            "scored_candidate_count": self.scored_candidate_count,
            "trace": {phase: [[i, s] for i, s in cands] for phase, cands in self.trace.items()},
            "error": self.error,
        }


def cosine_rows(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1) * np.linalg.norm(query)
    dots = matrix @ query
    with np.errstate(invalid="ignore", divide="ignore"):
        sims = np.where(norms > 0, dots / norms, 0.0)
    return sims


def phase1_top(q: str, hierarchy: Hierarchy, reranker: Reranker, k: int = DEFAULT_BEAM) -> Beam:
    top = hierarchy.top
    if not top:
        raise InvariantError("hierarchy has no top level")
    ids = list(top)
    scores = reranker.rerank_many(q, [top[c].summary for c in ids])
    return Beam.top_k(zip(ids, scores), k, hierarchy.depth)


def phase2_mid(q: str, beam: Beam, hierarchy: Hierarchy, reranker: Reranker, k: int = DEFAULT_BEAM) -> Beam:
    if not len(beam):
        raise ValueError("phase 2 needs a non-empty beam")
    ids, docs = [], []
    for parent_id in beam.ids:
        parent = hierarchy.community(parent_id)
        children = hierarchy.children(parent_id)
        if not children:
            ids.append(parent_id)
            docs.append(parent.summary)
            continue
        for child_id in children:
            ids.append(child_id)
            docs.append(parent.summary + PAIR_SEPARATOR + hierarchy.community(child_id).summary)
    scores = reranker.rerank_many(q, docs)
    return Beam.top_k(zip(ids, scores), k, max(beam.level - 1, 1))


def context_vector(v: Entity | str, hierarchy: Hierarchy) -> np.ndarray:
    """[D(v); D(parent)] with D(v) the entity's node vector."""
    eid = v if isinstance(v, str) else v.id
    local = hierarchy.node_vectors.get(eid)
    if local is None:
        raise InvariantError(f"entity {eid} has no node vector")
    parent = hierarchy.level1_parent(eid)
    if parent.representation is None:
        raise InvariantError(f"parent {parent.id} of {eid} has no representation")
    return np.concatenate([local, parent.representation])


def score_context(q_vec: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Cosine between the duplicated query [q; q] and each 2d context row."""
    doubled = np.concatenate([q_vec, q_vec])
    if rows.shape[1] != doubled.shape[0]:
        raise InvariantError(f"context rows have dim {rows.shape[1]}, query has {doubled.shape[0]}")
    return cosine_rows(rows, doubled)


def phase3_entities(q: str, beam: Beam, index: Index, embedder: Embedder, m: int = DEFAULT_TOP_M,
                    q_vec: np.ndarray | None = None) -> list[tuple[str, float]]:
    candidates = sorted({eid for cid in beam.ids for eid in index.hierarchy.entities_under(cid)})
    if not candidates:
        raise ValueError("no candidate entities under the beam")
    if q_vec is None:
        q_vec = embedder.embed([q])[0]
    rows = index.context_matrix[[index.entity_row[e] for e in candidates]]
    scores = score_context(q_vec, rows)
    return _ranked(zip(candidates, scores))[:m]


def build_context_document(entities: list[tuple[str, float]], index: Index, budget: int = DEFAULT_BUDGET) -> str:
    """Ranked entities with their mutual relations and (once each) parent summaries."""
    retrieved = {eid for eid, _ in entities}
    seen_rel_ids: set[str] = set()
    seen_rel_text: set[str] = set()
    seen_parents: set[str] = set()
    blocks = []
    for eid, _ in entities:
        e = index.graph.entities[eid]
        lines = [f"{e.name}: {e.description}"]
        for r in index.relations_by_entity[eid]:
            other = r.dst if r.src == eid else r.src
            if other in retrieved and r.id not in seen_rel_ids:
                seen_rel_ids.add(r.id)
                if r.description not in seen_rel_text:
                    seen_rel_text.add(r.description)
                    lines.append(r.description)
        parent_id = index.hierarchy.parent.get(eid)
        if parent_id is not None and parent_id not in seen_parents:
            seen_parents.add(parent_id)
            summary = index.hierarchy.community(parent_id).summary
            if summary:
                lines.append(summary)
        blocks.append("\n".join(lines))
    return truncate_tokens("\n\n".join(blocks), budget)


def phase4_integrate(q: str, entities: list[tuple[str, float]], index: Index, integrator: Integrator,
                     budget: int = DEFAULT_BUDGET) -> tuple[str, str]:
    """Returns (context document, integrated text)."""
    if not entities:
        raise ValueError("phase 4 needs at least one entity")
    document = build_context_document(entities, index, budget)
    return document, integrator.integrate(q, document)


def retrieve(q: str, index: Index, embedder: Embedder, rerank_fast: Reranker, rerank_fine: Reranker,
             integrator: Integrator | None = None, params: RetrievalParams | None = None) -> RetrievalResult:
    params = params or RetrievalParams()
    h = index.hierarchy
    beam1 = phase1_top(q, h, rerank_fast, params.k)
    count = len(h.top)
    beam2 = phase2_mid(q, beam1, h, rerank_fine, params.k)
    count += sum(max(len(h.children(cid)), 1) for cid in beam1.ids)
    candidates = {eid for cid in beam2.ids for eid in h.entities_under(cid)}
    ranked = phase3_entities(q, beam2, index, embedder, params.m)
    count += len(candidates)
    result = RetrievalResult(
        entities=ranked,
        trace={"phase1": list(beam1.candidates), "phase2": list(beam2.candidates), "phase3": ranked},
        scored_candidate_count=count,
    )
    if integrator is not None:
        result.context_document = build_context_document(ranked, index, params.budget)
        try:
            result.text = integrator.integrate(q, result.context_document)
        except ProviderError as exc:
            result.error = str(exc)
            log.warning("integration failed, returning the raw context document: %s", exc)
    return result


def local_search(q: str, index: Index, embedder: Embedder, m: int = DEFAULT_TOP_M,
                 integrator: Integrator | None = None, budget: int = DEFAULT_BUDGET) -> RetrievalResult:
    """Dense retrieval: cosine between the query and every entity's D(v)."""
    if not index.entity_ids:
        raise ValueError("local search over an empty graph")
    q_vec = embedder.embed([q])[0]
    scores = cosine_rows(index.node_matrix, q_vec)
    ranked = _ranked(zip(index.entity_ids, scores))[:m]
    result = RetrievalResult(entities=ranked, trace={"local": ranked},
                             scored_candidate_count=len(index.entity_ids))
    if integrator is not None:
        docs = [f"{index.graph.entities[eid].name}: {index.graph.entities[eid].description}" for eid, _ in ranked]
        result.context_document = truncate_tokens("\n\n".join(docs), budget)
        try:
            result.text = integrator.integrate(q, result.context_document)
        except ProviderError as exc:
            result.error = str(exc)
    return result


MAP_TEMPLATE = "{summary}"
REDUCE_TEMPLATE = "{partials}"


def global_search(q: str, index: Index, generator: Generator, map_template: str = MAP_TEMPLATE,
                  reduce_template: str = REDUCE_TEMPLATE) -> RetrievalResult:
    """Map each top-level summary through the generator (ascending id), then reduce."""
    top = index.hierarchy.top
    if not top:
        raise InvariantError("hierarchy has no top level")
    partials = []
    for cid in sorted(top):
        summary = top[cid].summary
        if not summary:
            raise InvariantError(f"top-level community {cid} has no summary")
        partials.append(generator.generate(map_template.format(question=q, summary=summary)))
    text = generator.generate(reduce_template.format(question=q, partials="\n".join(partials)))
    return RetrievalResult(entities=[], context_document="\n".join(partials), text=text,
                           trace={"map": [(cid, 0.0) for cid in sorted(top)]},
                           scored_candidate_count=len(top))
