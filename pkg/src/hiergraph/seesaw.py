"""Synthetic three-objective optimization that exhibits the seesaw effect.

The default task has a three-dimensional parameter vector ``(x, y2, y3)``:

* ``r1 = sigmoid(k1 * x)`` is the easy objective. Its gradient is large and it
  keeps rising as ``x`` grows.
* ``r2 = sigmoid(a2 * (y2 - h)) * gate(x)`` and the matching ``r3`` are the hard
  objectives. They start on a low plateau (``h`` away from the rise). They are
  also multiplied by ``gate(x) = sigmoid(-b * (x - x0))``, which closes as the
  easy objective is pushed up.

Under fixed uniform weights the easy objective's gradient dominates the group
advantage. ``x`` runs past ``x0``, the gate closes and the hard objectives lose
their gradient. With dynamic weights, the steady rise of ``r1`` and the fall of
``r2``/``r3`` shift weight onto the hard objectives before the gate shuts.

The constants below are fixtures tuned so this separation holds over many seeds.
They are not measured quantities.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hiergraph.dwgrpo import RewardVector, RewardWindow, WeightState, group_advantages, step_scheduler

N_PARAMS = 3

# Frozen default task.
DEFAULT_DIFFICULTIES = (1.0, 1.0, 0.7)  # k1, a2, a3
GATE_SLOPE = 3.0
GATE_CENTER = 0.5
PLATEAU_OFFSET = 3.0
DEFAULT_STEPS = 400
DEFAULT_LR = 0.05
DEFAULT_SIGMA = 0.3
SIM_TEMPERATURE = 0.1
# Acceptance fixtures: dynamic min(r2, r3) beats static by GAP_MARGIN, and
# static r1 beats both hard objectives by WITNESS_MARGIN.
GAP_MARGIN = 0.5
WITNESS_MARGIN = 0.5
FIXTURE_SEEDS = tuple(range(10))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    steps: int = DEFAULT_STEPS
    group_size: int = 8
    mode: str = "dynamic"
    learning_rate: float = DEFAULT_LR
    difficulties: tuple[float, float, float] = DEFAULT_DIFFICULTIES
    sigma: float = DEFAULT_SIGMA
    temperature: float = SIM_TEMPERATURE
    window: int = 16
    advantage_mode: str = "standard"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.mode not in ("static", "dynamic"):
            raise ValueError(f"mode must be 'static' or 'dynamic', got {self.mode!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if len(self.difficulties) != 3 or any(not d > 0 for d in self.difficulties):
            raise ValueError(f"need three positive difficulties, got {self.difficulties}")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")


def reward_matrix(points: np.ndarray, difficulties=DEFAULT_DIFFICULTIES) -> np.ndarray:
    """Rewards for a (n, 3) array of parameter points; returns (n, 3) in [0, 1]."""
    p = np.asarray(points, dtype=np.float64)
    if p.shape[-1] != N_PARAMS:
        raise ValueError(f"parameter points must have {N_PARAMS} components, got {p.shape[-1]}")
    k1, a2, a3 = difficulties
    x, y2, y3 = p[..., 0], p[..., 1], p[..., 2]
    gate = _sigmoid(-GATE_SLOPE * (x - GATE_CENTER))
    r1 = _sigmoid(k1 * x)
    r2 = _sigmoid(a2 * (y2 - PLATEAU_OFFSET)) * gate
    r3 = _sigmoid(a3 * (y3 - PLATEAU_OFFSET)) * gate
    return np.clip(np.stack([r1, r2, r3], axis=-1), 0.0, 1.0)


def synthetic_rewards(params, sample, difficulties=DEFAULT_DIFFICULTIES) -> RewardVector:
    """Rewards at ``params + sample``."""
    params = np.asarray(params, dtype=np.float64)
    sample = np.asarray(sample, dtype=np.float64)
    if params.shape != (N_PARAMS,) or sample.shape != (N_PARAMS,):
        raise ValueError(f"params and sample must both have shape ({N_PARAMS},), "
                         f"got {params.shape} and {sample.shape}")
    r = reward_matrix(params + sample, difficulties)
    return RewardVector(float(r[0]), float(r[1]), float(r[2]))


@dataclass
class SimTrajectory:
    rewards: np.ndarray  # (steps, 3) group-mean rewards per step
    weights: np.ndarray  # (steps, 3) weights used at each step
    final_params: np.ndarray
    config: SimConfig = field(default_factory=SimConfig)

    def __len__(self) -> int:
        return self.rewards.shape[0]

    def final_rewards(self) -> np.ndarray:
        """Noise-free rewards at the final parameters."""
        return reward_matrix(self.final_params, self.config.difficulties)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "r1", "r2", "r3", "w1", "w2", "w3"])
            for i, (r, wt) in enumerate(zip(self.rewards, self.weights)):
                w.writerow([i, *(repr(float(v)) for v in r), *(repr(float(v)) for v in wt)])


def run_sim(config: SimConfig) -> SimTrajectory:
    rng = np.random.default_rng(config.seed)
    params = np.zeros(N_PARAMS)
    window = RewardWindow(config.window)
    state = WeightState.uniform(temperature=config.temperature)
    rewards = np.empty((config.steps, 3))
    weights = np.empty((config.steps, 3))
    for t in range(config.steps):
        eps = rng.standard_normal((config.group_size, N_PARAMS))
        r = reward_matrix(params + config.sigma * eps, config.difficulties)
        adv = group_advantages(r, state.weights, config.advantage_mode)
        weights[t] = state.weights
        rewards[t] = r.mean(axis=0)
        params = params + config.learning_rate * (adv @ eps) / config.group_size
        if config.mode == "dynamic":
            window, state = step_scheduler(window, state, rewards[t])
    return SimTrajectory(rewards, weights, params, config)


def compare_modes(seed: int, **overrides) -> tuple[np.ndarray, np.ndarray]:
    """Final noise-free rewards for (static, dynamic) at one seed."""
    static = run_sim(SimConfig(seed=seed, mode="static", **overrides)).final_rewards()
    dynamic = run_sim(SimConfig(seed=seed, mode="dynamic", **overrides)).final_rewards()
    return static, dynamic


def read_csv(path) -> tuple[np.ndarray, np.ndarray]:
    rows = list(csv.DictReader(open(path, newline="")))
    if not rows:
        raise ValueError(f"{path} has no trajectory rows")
    r = np.array([[float(row[k]) for k in ("r1", "r2", "r3")] for row in rows])
    w = np.array([[float(row[k]) for k in ("w1", "w2", "w3")] for row in rows])
    return r, w


def smooth(series: np.ndarray, span: int = 16) -> np.ndarray:
    if span <= 1 or series.shape[0] < 2:
        return series
    kernel = np.ones(span) / span
    padded = np.concatenate([np.repeat(series[:1], span - 1, axis=0), series])
    return np.stack([np.convolve(padded[:, j], kernel, mode="valid") for j in range(series.shape[1])], axis=1)


def plot_trajectories(csv_paths, out_path, span: int = 16) -> Path:
    """Smoothed reward and weight curves, one column per trajectory file."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = [Path(p) for p in csv_paths]
    fig, axes = plt.subplots(2, len(paths), figsize=(5 * len(paths), 6), squeeze=False, sharex="col")
    labels = ("r1 (easy)", "r2", "r3")
    for col, p in enumerate(paths):
        r, w = read_csv(p)
        top, bottom = axes[0][col], axes[1][col]
        for j in range(3):
            top.plot(smooth(r, span)[:, j], label=labels[j])
            bottom.plot(w[:, j], label=f"w{j + 1}")
        top.set_title(p.stem)
        top.set_ylim(0, 1.05)
        top.set_ylabel("reward")
        bottom.set_ylabel("weight")
        bottom.set_xlabel("step")
        top.legend(loc="best", fontsize=8)
        bottom.legend(loc="best", fontsize=8)
    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, dpi=100)
    plt.close(fig)
    return out
