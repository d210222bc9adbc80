"""Question categorization, exact-match scoring and strategy comparison."""
from __future__ import annotations

import json
import logging
import re
import string
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from hiergraph.graph import Hierarchy, InvariantError
from hiergraph.index import Index
from hiergraph.providers import ProviderError, Providers
from hiergraph.retrieval import RetrievalParams, RetrievalResult, global_search, local_search, retrieve

log = logging.getLogger(__name__)

CATEGORIES = ("LQ", "GQ", "CQ")
UNKNOWN = "UNKNOWN"
STRATEGIES = ("deep", "local", "global")

_PUNCT = str.maketrans("", "", string.punctuation)
_WS = re.compile(r"\s+")
_ARTICLES = ("a", "an", "the")


@dataclass(frozen=True)
class QAItem:
    id: str
    question: str
    gold_answers: tuple[str, ...]
    answer_path: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.question.strip():
            raise ValueError(f"item {self.id}: empty question")
        object.__setattr__(self, "gold_answers", tuple(self.gold_answers))
        object.__setattr__(self, "answer_path", tuple(self.answer_path))
        if not self.gold_answers:
            raise ValueError(f"item {self.id}: no gold answers")

    @classmethod
    def from_record(cls, record: Mapping) -> "QAItem":
        try:
            return cls(str(record["id"]), record["question"], tuple(record["answers"]),
                       tuple(record.get("answer_path") or ()))
        except KeyError as exc:
            raise ValueError(f"dataset record is missing field {exc.args[0]!r}: {record}") from None


def read_dataset(path) -> list[QAItem]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            items.append(QAItem.from_record(record))
    return items


def categorize(item: QAItem, hierarchy: Hierarchy, adjacency: Mapping[str, set[str]]) -> str:
    """LQ / GQ / CQ from the ground-truth answer path, UNKNOWN when it is empty.

    * LQ: one entity, or two directly connected entities.
    * GQ: more than two entities over at least two level-1 communities.
    * CQ: everything else. That covers more than two entities inside one
      community and two entities that are not adjacent.
    """
    path = list(dict.fromkeys(item.answer_path))
    if not path:
        return UNKNOWN
    for eid in path:
        if eid not in hierarchy.parent:
            raise InvariantError(f"item {item.id}: path entity {eid} is not in the hierarchy")
    a, b = path[0], path[-1]
    if len(path) == 1 or (len(path) == 2 and (b in adjacency.get(a, ()) or a in adjacency.get(b, ()))):
        return "LQ"
    communities = {hierarchy.parent[eid] for eid in path}
    if len(path) > 2 and len(communities) >= 2:
        return "GQ"
    return "CQ"


def normalize_answer(text: str) -> str:
    s = _WS.sub(" ", text.lower().translate(_PUNCT)).strip()
    head, _, rest = s.partition(" ")
    if head in _ARTICLES and rest:
        s = rest
    return s


def exact_match(prediction: str, gold_answers: Sequence[str]) -> int:
    if not gold_answers:
        raise ValueError("gold_answers must be non-empty")
    pred = normalize_answer(prediction)
    return int(any(pred == normalize_answer(g) for g in gold_answers))


@dataclass
class ItemResult:
    item_id: str
    category: str
    strategy: str
    prediction: str = ""
    em: int = 0
    scored_candidate_count: int = 0
    seconds: float = 0.0
    error: str | None = None

    def to_json(self) -> dict:
        # Wall time is kept out of the report so reruns compare byte-for-byte.
        return {"id": self.item_id, "category": self.category, "strategy": self.strategy,
                "prediction": self.prediction, "em": self.em,
                "scored_candidate_count": self.scored_candidate_count, "error": self.error}


def _pct(hits: int, n: int) -> float | None:
    return None if n == 0 else round(100.0 * hits / n, 6)


@dataclass
class StrategySummary:
    em: dict[str, float | None]
    counts: dict[str, int]
    total_em: float
    failures: int
    candidates_mean: float
    candidates_max: int
    seconds_mean: float = 0.0
    seconds_max: float = 0.0

    def to_json(self) -> dict:
        return {"em": self.em, "counts": self.counts, "total_em": self.total_em, "failures": self.failures,
                "scored_candidate_count": {"mean": self.candidates_mean, "max": self.candidates_max}}


def summarize(results: Sequence[ItemResult]) -> StrategySummary:
    if not results:
        raise ValueError("no results to summarize")
    counts = {c: 0 for c in (*CATEGORIES, UNKNOWN)}
    hits = dict(counts)
    for r in results:
        counts[r.category] += 1
        hits[r.category] += r.em
    cand = np.array([r.scored_candidate_count for r in results], dtype=np.float64)
    secs = np.array([r.seconds for r in results])
    return StrategySummary(
        em={c: _pct(hits[c], counts[c]) for c in (*CATEGORIES, UNKNOWN)},
        counts=counts,
        total_em=_pct(sum(hits.values()), len(results)),
        failures=sum(r.error is not None for r in results),
        candidates_mean=round(float(cand.mean()), 6),
        candidates_max=int(cand.max()),
        seconds_mean=float(secs.mean()),
        seconds_max=float(secs.max()),
    )


@dataclass
class EvalReport:
    strategies: dict[str, StrategySummary]
    items: list[ItemResult] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"strategies": {s: v.to_json() for s, v in self.strategies.items()},
                "items": [r.to_json() for r in self.items],
                "table": self.table()}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def timings(self) -> dict:
        return {s: {"mean_seconds": v.seconds_mean, "max_seconds": v.seconds_max}
                for s, v in self.strategies.items()}

    def table(self) -> str:
        def cell(x):
            return "-" if x is None else f"{x:.1f}"
        lines = ["| Strategy | EM-LQ (%) | EM-GQ (%) | EM-CQ (%) | EM-Total (%) | Candidates (mean) |",
                 "|---|---|---|---|---|---|"]
        for name, s in self.strategies.items():
            lines.append(f"| {name} | {cell(s.em['LQ'])} | {cell(s.em['GQ'])} | {cell(s.em['CQ'])} "
                         f"| {cell(s.total_em)} | {s.candidates_mean:.1f} |")
        return "\n".join(lines)

    def write(self, path) -> Path:
        """Write the report, plus wall times in a ``.timings.json`` sidecar."""
        out = Path(path)
        out.write_text(self.dumps(), encoding="utf-8")
        sidecar = out.with_name(out.stem + ".timings.json")
        sidecar.write_text(json.dumps(self.timings(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return out


def run_strategy(strategy: str, question: str, index: Index, providers: Providers,
                 params: RetrievalParams) -> RetrievalResult:
    if strategy == "deep":
        return retrieve(question, index, providers.embedder, providers.rerank_fast, providers.rerank_fine,
                        providers.integrator, params)
    if strategy == "local":
        return local_search(question, index, providers.embedder, params.m, providers.integrator, params.budget)
    if strategy == "global":
        return global_search(question, index, providers.generator)
    raise ValueError(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)}")


def _evaluate_item(item: QAItem, category: str, strategy: str, index: Index, providers: Providers,
                   params: RetrievalParams) -> ItemResult:
    out = ItemResult(item.id, category, strategy)
    start = time.perf_counter()
    try:
        result = run_strategy(strategy, item.question, index, providers, params)
        out.scored_candidate_count = result.scored_candidate_count
        if result.error is not None:
            out.error = result.error
        else:
            out.prediction = result.text
            out.em = exact_match(result.text, item.gold_answers)
    except ProviderError as exc:
        out.error = str(exc)
        log.warning("item %s (%s) failed: %s", item.id, strategy, exc)
    out.seconds = time.perf_counter() - start
    return out


def run_eval(items: Sequence[QAItem], index: Index, strategies: Sequence[str], providers: Providers,
             params: RetrievalParams | None = None, parallelism: int = 1) -> EvalReport:
    if not items:
        raise ValueError("evaluation needs at least one item")
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown or not strategies:
        raise ValueError(f"unknown strategies {unknown}; choose from {', '.join(STRATEGIES)}")
    params = params or RetrievalParams()
    adjacency = index.graph.adjacency()
    ordered = sorted(items, key=lambda it: it.id)
    categories = {it.id: categorize(it, index.hierarchy, adjacency) for it in ordered}
    jobs = [(it, s) for s in strategies for it in ordered]

    def work(job):
        it, s = job
        return _evaluate_item(it, categories[it.id], s, index, providers, params)

    if parallelism > 1:
        with ThreadPoolExecutor(parallelism) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    summaries = {s: summarize([r for r in results if r.strategy == s]) for s in strategies}
    return EvalReport(summaries, results)
