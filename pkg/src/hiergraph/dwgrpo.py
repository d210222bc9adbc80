"""Dynamic reward weighting for group-relative policy optimization.

Three rewards score a distilled text C against its source K and query Q:
relevance (cross-encoder score), faithfulness (token-level greedy-matching F1)
and conciseness (1 - len(C)/len(K), floored at 0). Per-objective weights are
re-derived every step by a temperature softmax over the negated normalized
slope of each objective's recent step-mean rewards, so objectives whose
rewards are growing slowly (or falling) receive more weight.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from hiergraph.providers import Embedder, Reranker, clamp01
from hiergraph.text import whitespace_tokens

N_OBJECTIVES = 3
ADV_EPS = 1e-8
DEFAULT_WINDOW = 16
DEFAULT_TEMPERATURE = 1.0


@dataclass(frozen=True)
class RewardVector:
    rel: float
    faith: float
    conc: float

    def __post_init__(self):
        values = (self.rel, self.faith, self.conc)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite reward in {values}")
        if not 0.0 <= self.conc <= 1.0:
            raise ValueError(f"conciseness {self.conc} outside [0, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.rel, self.faith, self.conc])


# ------------------------------------------------------------------- rewards

def _nonempty(text: str, what: str) -> None:
    if not text or not text.strip():
        raise ValueError(f"{what} must be non-empty")


def reward_relevance(query: str, output: str, cross_scorer: Reranker) -> float:
    _nonempty(query, "query")
    _nonempty(output, "output")
    return clamp01(cross_scorer.rerank(query, output))


class TokenF1Scorer:
    """Greedy-matching F1 over tokens.

    Each candidate token is matched to its most similar reference token
    (precision) and vice versa (recall). With an embedder, similarity is the
    cosine of per-token embeddings; without one, tokens match only when equal.
    """

    def __init__(self, embedder: Embedder | None = None):
        self.embedder = embedder

    def _similarity(self, cand: list[str], ref: list[str]) -> np.ndarray:
        if self.embedder is None:
            return np.array([[1.0 if a == b else 0.0 for b in ref] for a in cand])
        vocab = sorted(set(cand) | set(ref))
        vecs = self.embedder.embed(vocab).astype(np.float64)
        row = {t: i for i, t in enumerate(vocab)}
        a = vecs[[row[t] for t in cand]]
        b = vecs[[row[t] for t in ref]]
        return np.clip(a @ b.T, 0.0, 1.0)

    def __call__(self, candidate: str, reference: str) -> float:
        cand, ref = whitespace_tokens(candidate), whitespace_tokens(reference)
        if not cand or not ref:
            return 0.0
        sim = self._similarity(cand, ref)
        precision = float(sim.max(axis=1).mean())
        recall = float(sim.max(axis=0).mean())
        if precision + recall == 0.0:
            return 0.0
        return clamp01(2 * precision * recall / (precision + recall))


def reward_faithfulness(output: str, source: str, sim_scorer: Callable[[str, str], float] | None = None) -> float:
    _nonempty(output, "output")
    _nonempty(source, "source")
    scorer = sim_scorer or TokenF1Scorer()
    return clamp01(scorer(output, source))


def reward_conciseness(output: str, source: str) -> float:
    n_source = len(whitespace_tokens(source))
    if n_source == 0:
        raise ValueError("source text has no tokens")
    return max(0.0, 1.0 - len(whitespace_tokens(output)) / n_source)


def score_output(query: str, output: str, source: str, cross_scorer: Reranker,
                 sim_scorer: Callable[[str, str], float] | None = None) -> RewardVector:
    return RewardVector(reward_relevance(query, output, cross_scorer),
                        reward_faithfulness(output, source, sim_scorer),
                        reward_conciseness(output, source))


# ---------------------------------------------------------------- scheduling

def fit_slope(series: Sequence[float]) -> float:
    """Ordinary least-squares slope of ``series`` against 0, 1, ..., n-1."""
    y = np.asarray(series, dtype=np.float64)
    if y.ndim != 1 or y.size < 2:
        raise ValueError("fit_slope needs at least two points")
    x = np.arange(y.size, dtype=np.float64)
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


def rate_of_change(series: Sequence[float]) -> float:
    """Slope divided by the series range; 0 for a flat series."""
    y = np.asarray(series, dtype=np.float64)
    if y.size < 2:
        raise ValueError("rate_of_change needs at least two points")
    spread = float(y.max() - y.min())
    if spread == 0.0:
        return 0.0
    return fit_slope(y) / spread


@dataclass(frozen=True)
class WeightState:
    weights: tuple[float, ...]
    total: float
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if any(not w > 0 for w in self.weights):
            raise ValueError(f"weights must be positive, got {self.weights}")
        if abs(sum(self.weights) - self.total) > 1e-9 * max(1.0, abs(self.total)):
            raise ValueError(f"weights sum {sum(self.weights)} != total {self.total}")

    @classmethod
    def uniform(cls, n: int = N_OBJECTIVES, total: float = 1.0,
                temperature: float = DEFAULT_TEMPERATURE) -> "WeightState":
        return cls(tuple([total / n] * n), total, temperature)

    @classmethod
    def initial(cls, weights: Sequence[float], temperature: float = DEFAULT_TEMPERATURE) -> "WeightState":
        return cls(tuple(float(w) for w in weights), float(sum(weights)), temperature)


def softmax_weights(alphas: Sequence[float], total: float, temperature: float) -> np.ndarray:
    a = np.asarray(alphas, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite rate of change in {alphas}")
    logits = -a / temperature
    logits -= logits.max()
    e = np.exp(logits)
    return total * e / e.sum()


def update_weights(state: WeightState, alphas: Sequence[float]) -> WeightState:
    w = np.maximum(softmax_weights(alphas, state.total, state.temperature), 1e-300)
    # Absorb rounding into the largest weight so the sum stays exact across steps.
    big = int(np.argmax(w))
    w[big] = state.total - (w.sum() - w[big])
    return WeightState(tuple(float(x) for x in w), state.total, state.temperature)


@dataclass
class RewardWindow:
    """Per-objective ring buffers of the last ``length`` step-mean rewards."""

    length: int = DEFAULT_WINDOW
    n_objectives: int = N_OBJECTIVES
    buffers: list[deque] = field(default_factory=list)

    def __post_init__(self):
        if self.length < 2:
            raise ValueError("window length must be >= 2")
        if not self.buffers:
            self.buffers = [deque(maxlen=self.length) for _ in range(self.n_objectives)]

    def push(self, values: Sequence[float]) -> None:
        if len(values) != self.n_objectives:
            raise ValueError(f"expected {self.n_objectives} values, got {len(values)}")
        for buf, v in zip(self.buffers, values):
            buf.append(float(v))

    def __len__(self) -> int:
        return min(len(b) for b in self.buffers)

    def alphas(self) -> list[float]:
        return [rate_of_change(list(b)) for b in self.buffers]

    def copy(self) -> "RewardWindow":
        return RewardWindow(self.length, self.n_objectives,
                            [deque(b, maxlen=self.length) for b in self.buffers])


def step_scheduler(window: RewardWindow, state: WeightState,
                   step_mean_rewards: Sequence[float]) -> tuple[RewardWindow, WeightState]:
    """Push one step of mean rewards; re-weight once every buffer has two points."""
    window = window.copy()
    window.push(step_mean_rewards)
    if len(window) >= 2:
        state = update_weights(state, window.alphas())
    return window, state


# ---------------------------------------------------------------- advantages

@dataclass
class RolloutGroup:
    outputs: list[str]
    rewards: list[RewardVector]
    advantages: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.outputs) != len(self.rewards):
            raise ValueError("outputs and rewards differ in length")

    def reward_matrix(self) -> np.ndarray:
        return np.vstack([r.as_array() for r in self.rewards])


def group_advantages(reward_matrix: np.ndarray, weights: Sequence[float], mode: str = "standard") -> np.ndarray:
    """Advantages for a (group, objective) reward matrix.

    ``standard``: (r - mean) / (std + eps) of the weighted reward r.
    ``literal``: r - (r - mean) / (std + eps), the weighted reward itself minus
    its standardized value.
    """
    r = np.asarray(reward_matrix, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] < 2:
        raise ValueError("advantages need a group of at least two samples")
    combined = r @ np.asarray(weights, dtype=np.float64)
    z = (combined - combined.mean()) / (combined.std() + ADV_EPS)
    if mode == "standard":
        return z
    if mode == "literal":
        return combined - z
    raise ValueError(f"unknown advantage mode {mode!r}")


def weighted_advantage(group: RolloutGroup, weights: Sequence[float], mode: str = "standard") -> list[float]:
    adv = group_advantages(group.reward_matrix(), weights, mode)
    group.advantages = [float(a) for a in adv]
    return group.advantages


def snapshot(step: int, window: RewardWindow, state: WeightState) -> str:
    """One JSON line describing scheduler state, for plotting."""
    return json.dumps({"step": step, "weights": list(state.weights),
                       "window": [list(b) for b in window.buffers]}, separators=(",", ":"))
