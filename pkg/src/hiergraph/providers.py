"""Model-backed scoring: embedder, rerankers, extractor, discriminator, generator.

Every role has a deterministic offline mock and an HTTP client speaking a
minimal JSON contract::

    POST /embed    {"texts": [...]}                  -> {"vectors": [[...], ...]}
    POST /rerank   {"query": ..., "document": ...}   -> {"score": ...}
    POST /generate {"prompt": ...}                   -> {"text": ...}

The extractor and discriminator clients are built on ``/generate``.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from hiergraph.graph import Chunk, Entity
from hiergraph.text import normalize_name

log = logging.getLogger(__name__)


class ProviderError(RuntimeError):
    """A provider call failed or returned something unusable."""

    def __init__(self, message: str, payload: str | None = None):
        super().__init__(message if payload is None else f"{message}; raw payload: {payload[:500]!r}")
        self.payload = payload


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str
    model_name: str = ""
    timeout: float = 30.0
    max_batch: int = 32
    retry_limit: int = 2
    max_in_flight: int = 8
    api_key: str | None = None

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        if not self.timeout > 0:
            raise ValueError("timeout must be > 0")


@dataclass(frozen=True)
class EntityDraft:
    name: str
    description: str


@dataclass(frozen=True)
class RelationDraft:
    src: str
    dst: str
    description: str
    weight: float = 1.0


class Embedder(Protocol):
    dim: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class Reranker(Protocol):
    def rerank(self, query: str, document: str) -> float: ...

    def rerank_many(self, query: str, documents: Sequence[str]) -> list[float]: ...


class Extractor(Protocol):
    def extract(self, chunk: Chunk) -> tuple[list[EntityDraft], list[RelationDraft]]: ...


class Discriminator(Protocol):
    def discriminate(self, a: Entity, b: Entity) -> bool: ...


class Generator(Protocol):
    def generate(self, prompt: str) -> str: ...


def _require_text(text: str, what: str = "text") -> None:
    if not isinstance(text, str) or not text.strip():
        raise ValueError(f"{what} must be non-empty")


def clamp01(x: float) -> float:
    return min(1.0, max(0.0, float(x)))


# --------------------------------------------------------------------- mocks

_STRIP = re.compile(r"^\W+|\W+$")


def mock_token(token: str) -> str:
    norm = _STRIP.sub("", token.casefold())
    return norm or token.casefold()


def token_bucket(token: str, dim: int) -> int:
    digest = hashlib.blake2b(mock_token(token).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


class MockEmbedder:
    """Hashed bag-of-words: each token adds 1 to bucket hash(token) % dim, then L2-normalize.

    Tokens are casefolded and stripped of surrounding punctuation before
    hashing, so "Paris," and "paris" land in the same bucket.
    """

    def __init__(self, dim: int = 256):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim

    def embed_one(self, text: str) -> np.ndarray:
        _require_text(text)
        counts = np.zeros(self.dim, dtype=np.float64)
        for tok in text.split():
            counts[token_bucket(tok, self.dim)] += 1.0
        return (counts / np.linalg.norm(counts)).astype(np.float32)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.vstack([self.embed_one(t) for t in texts])


class MockReranker:
    """(1 + cos) / 2 over mock embeddings."""

    def __init__(self, embedder: MockEmbedder | None = None):
        self.embedder = embedder or MockEmbedder()

    def rerank(self, query: str, document: str) -> float:
        return self.rerank_many(query, [document])[0]

    def rerank_many(self, query: str, documents: Sequence[str]) -> list[float]:
        _require_text(query, "query")
        if not documents:
            return []
        q = self.embedder.embed_one(query).astype(np.float64)
        docs = self.embedder.embed(documents).astype(np.float64)
        return [clamp01((1.0 + c) / 2.0) for c in (docs @ q)]


_STOP = frozenset("a an the this that these those it its in on at of for to by with from and or but "
                  "he she they we i you his her their our is was are were".split())
_ABBREV = re.compile(r"^(?:[A-Za-z]\.){2,}$")


def split_sentences(text: str) -> list[str]:
    """Split at terminal punctuation followed by a capitalized token.

    Dotted abbreviations such as "U.S." never end a sentence.
    """
    tokens = text.split()
    sentences, current = [], []
    for i, tok in enumerate(tokens):
        current.append(tok)
        core = tok.rstrip("\"')]")
        nxt = tokens[i + 1] if i + 1 < len(tokens) else ""
        if core[-1:] in ".!?" and not _ABBREV.match(core) and (not nxt or nxt.lstrip("\"'([")[:1].isupper()):
            sentences.append(" ".join(current))
            current = []
    if current:
        sentences.append(" ".join(current))
    return sentences


def _clean_token(tok: str) -> tuple[str, bool]:
    """Strip trailing punctuation; report whether the token closed a phrase."""
    closes = bool(re.search(r"[,;:!?)\]\"']$", tok)) or (tok.endswith(".") and tok.count(".") == 1)
    core = tok.strip("\"'()[]{},;:!?")
    if core.endswith(".") and core.count(".") == 1:
        core = core[:-1]
    return core, closes


def capitalized_runs(sentence: str) -> list[str]:
    """Maximal runs of capitalized tokens; leading stop-words are dropped."""
    runs, current = [], []

    def flush():
        words = list(current)
        while words and words[0].casefold() in _STOP:
            words.pop(0)
        if words:
            runs.append(" ".join(words))
        current.clear()

    for raw in sentence.split():
        core, closes = _clean_token(raw)
        if core and core[0].isupper():
            current.append(core)
            if closes:
                flush()
        else:
            flush()
    flush()
    return runs


class RuleExtractor:
    """Entities are capitalized token runs; every ordered pair of entities in a
    sentence yields a relation whose description is that sentence."""

    def extract(self, chunk: Chunk) -> tuple[list[EntityDraft], list[RelationDraft]]:
        _require_text(chunk.text, f"chunk {chunk.id} text")
        descriptions: dict[str, list[str]] = {}
        names: dict[str, str] = {}
        relations: list[RelationDraft] = []
        for sentence in split_sentences(chunk.text):
            seen: list[str] = []
            for run in capitalized_runs(sentence):
                key = normalize_name(run)
                names.setdefault(key, run)
                if key not in seen:
                    seen.append(key)
                    sents = descriptions.setdefault(key, [])
                    if sentence not in sents:
                        sents.append(sentence)
            for i, a in enumerate(seen):
                for b in seen[i + 1:]:
                    relations.append(RelationDraft(names[a], names[b], sentence))
        entities = [EntityDraft(names[k], " ".join(v)) for k, v in descriptions.items()]
        return entities, relations


class AliasDiscriminator:
    """Same concept iff normalized names match or one is a registered alias of the other."""

    def __init__(self, aliases: Mapping[str, str] | Sequence[tuple[str, str]] = ()):
        pairs = aliases.items() if isinstance(aliases, Mapping) else aliases
        self._pairs = {frozenset((normalize_name(a), normalize_name(b))) for a, b in pairs}

    def discriminate(self, a: Entity, b: Entity) -> bool:
        na, nb = normalize_name(a.name), normalize_name(b.name)
        return na == nb or frozenset((na, nb)) in self._pairs


class IdentityGenerator:
    """Returns the prompt cut to ``limit`` characters."""

    def __init__(self, limit: int = 2000):
        self.limit = limit

    def generate(self, prompt: str) -> str:
        _require_text(prompt, "prompt")
        return prompt[: self.limit]


# ---------------------------------------------------------------------- HTTP

class HTTPClient:
    """JSON-over-HTTP with bounded retries and a cap on in-flight requests."""

    def __init__(self, config: ProviderConfig):
        self.config = config
        self._slots = threading.BoundedSemaphore(config.max_in_flight)

    def post(self, route: str, payload: dict) -> dict:
        url = self.config.endpoint.rstrip("/") + route
        body = json.dumps({**payload, **({"model": self.config.model_name} if self.config.model_name else {})}).encode()
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        last: Exception | None = None
        for attempt in range(self.config.retry_limit + 1):
            if attempt:
                time.sleep(min(2.0, 0.1 * 2 ** (attempt - 1)))
            try:
                with self._slots:
                    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
                    with urllib.request.urlopen(req, timeout=self.config.timeout) as resp:
                        raw = resp.read().decode("utf-8")
            except urllib.error.HTTPError as exc:
                last = exc
                if 400 <= exc.code < 500 and exc.code != 429:
                    break
                continue
            except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
                last = exc
                continue
            try:
                return json.loads(raw)
            except json.JSONDecodeError:
                raise ProviderError(f"malformed JSON from {url}", raw) from None
        raise ProviderError(f"request to {url} failed after {self.config.retry_limit + 1} attempts: {last}")


class HTTPEmbedder:
    def __init__(self, config: ProviderConfig, dim: int):
        self.client = HTTPClient(config)
        self.dim = dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        for t in texts:
            _require_text(t)
        out = []
        step = self.client.config.max_batch
        for start in range(0, len(texts), step):
            batch = list(texts[start:start + step])
            resp = self.client.post("/embed", {"texts": batch})
            try:
                vecs = np.asarray(resp["vectors"], dtype=np.float64)
            except (KeyError, TypeError, ValueError):
                raise ProviderError("embed response lacks a numeric 'vectors' array", json.dumps(resp)) from None
            if vecs.shape != (len(batch), self.dim):
                raise ProviderError(f"embed returned shape {vecs.shape}, expected ({len(batch)}, {self.dim})")
            norms = np.linalg.norm(vecs, axis=1, keepdims=True)
            if np.any(norms == 0):
                raise ProviderError("embed returned a zero vector")
            out.append((vecs / norms).astype(np.float32))
        return np.vstack(out) if out else np.zeros((0, self.dim), dtype=np.float32)


class HTTPReranker:
    def __init__(self, config: ProviderConfig):
        self.client = HTTPClient(config)

    def rerank(self, query: str, document: str) -> float:
        _require_text(query, "query")
        _require_text(document, "document")
        resp = self.client.post("/rerank", {"query": query, "document": document})
        try:
            score = float(resp["score"])
        except (KeyError, TypeError, ValueError):
            raise ProviderError("rerank response lacks a numeric 'score'", json.dumps(resp)) from None
        if not math.isfinite(score):
            raise ProviderError("rerank returned a non-finite score", json.dumps(resp))
        return clamp01(score)

    def rerank_many(self, query: str, documents: Sequence[str]) -> list[float]:
        return [self.rerank(query, d) for d in documents]


class HTTPGenerator:
    def __init__(self, config: ProviderConfig):
        self.client = HTTPClient(config)

    def generate(self, prompt: str) -> str:
        _require_text(prompt, "prompt")
        resp = self.client.post("/generate", {"prompt": prompt})
        text = resp.get("text") if isinstance(resp, dict) else None
        if not isinstance(text, str):
            raise ProviderError("generate response lacks a 'text' string", json.dumps(resp))
        return text


EXTRACT_PROMPT = (
    "Extract entities and directed relationships from the text below. Reply with JSON only: "
    '{{"entities": [{{"name": ..., "description": ...}}], '
    '"relations": [{{"src": ..., "dst": ..., "description": ...}}]}}. '
    "Every relation needs a concise natural-language description.\n\nText:\n{text}"
)

DISCRIMINATE_PROMPT = (
    "Do these two entries refer to the same real-world concept? Answer yes or no.\n"
    "A: {a_name}: {a_desc}\nB: {b_name}: {b_desc}"
)


class LLMExtractor:
    def __init__(self, generator: Generator, template: str = EXTRACT_PROMPT):
        self.generator = generator
        self.template = template

    def extract(self, chunk: Chunk) -> tuple[list[EntityDraft], list[RelationDraft]]:
        _require_text(chunk.text, f"chunk {chunk.id} text")
        raw = self.generator.generate(self.template.format(text=chunk.text))
        match = re.search(r"\{.*\}", raw, re.S)
        try:
            data = json.loads(match.group(0) if match else raw)
            entities = [EntityDraft(str(e["name"]).strip(), str(e.get("description", "")))
                        for e in data.get("entities", [])]
            relations = [RelationDraft(str(r["src"]).strip(), str(r["dst"]).strip(), str(r.get("description", "")),
                                       float(r.get("weight", 1.0)))
                         for r in data.get("relations", [])]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError):
            raise ProviderError(f"unparsable extraction for chunk {chunk.id}", raw) from None
        entities = [e for e in entities if e.name]
        known = {normalize_name(e.name) for e in entities}
        relations = [r for r in relations if normalize_name(r.src) in known and normalize_name(r.dst) in known]
        return entities, relations


class LLMDiscriminator:
    def __init__(self, generator: Generator, template: str = DISCRIMINATE_PROMPT):
        self.generator = generator
        self.template = template

    def discriminate(self, a: Entity, b: Entity) -> bool:
        raw = self.generator.generate(self.template.format(
            a_name=a.name, a_desc=a.description, b_name=b.name, b_desc=b.description))
        word = raw.strip().split()[0].strip(".,!").casefold() if raw.strip() else ""
        if word in ("yes", "true"):
            return True
        if word in ("no", "false"):
            return False
        raise ProviderError("discriminator answer is neither yes nor no", raw)


class Integrator:
    """Distills a context document through a generator using ``template``.

    The default template passes the document through unchanged, which keeps
    the identity mock's output equal to the (truncated) document.
    """

    def __init__(self, generator: Generator, template: str = "{document}"):
        self.generator = generator
        self.template = template

    def integrate(self, question: str, document: str) -> str:
        return self.generator.generate(self.template.format(question=question, document=document))


@dataclass
class Providers:
    """One object per provider slot."""

    embedder: Embedder
    rerank_fast: Reranker
    rerank_fine: Reranker
    extractor: Extractor
    discriminator: Discriminator
    generator: Generator
    integrator: Integrator = field(default=None)

    def __post_init__(self):
        if self.integrator is None:
            self.integrator = Integrator(self.generator)

    @classmethod
    def mock(cls, dim: int = 256, generate_limit: int = 2000,
             aliases: Mapping[str, str] | Sequence[tuple[str, str]] = ()) -> "Providers":
        embedder = MockEmbedder(dim)
        reranker = MockReranker(embedder)
        return cls(embedder, reranker, reranker, RuleExtractor(), AliasDiscriminator(aliases),
                   IdentityGenerator(generate_limit))
