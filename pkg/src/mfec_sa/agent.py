"""Episodic-control agent loop: epsilon-greedy acting, tracing, backward writeback."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedding import ProjectionMatrix, embed
from .errors import ConfigError, InputError
from .store import Branch, QECStore, WritebackOutcome


@dataclass(frozen=True)
class AgentConfig:
    epsilon: float = 0.005
    k: int = 11
    eps_in: float = 0.0
    eps_out: float = 100.0
    gamma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in [0, 1], got {self.epsilon}", key="epsilon")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}", key="gamma")
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError(f"k must be a positive integer, got {self.k}", key="k")
        if not self.eps_in >= 0.0:
            raise ConfigError(f"eps_in must be >= 0, got {self.eps_in}", key="eps-in")
        if not self.eps_out >= 0.0:
            raise ConfigError(f"eps_out must be >= 0, got {self.eps_out}", key="eps-out")


@dataclass
class EpisodeTrace:
    keys: list[np.ndarray] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)

    def append(self, key: np.ndarray, action: int, reward: float) -> None:
        self.keys.append(key)
        self.actions.append(action)
        self.rewards.append(reward)

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def steps(self) -> list[tuple[np.ndarray, int, float]]:
        return list(zip(self.keys, self.actions, self.rewards))

    def same_as(self, other: EpisodeTrace) -> bool:
        return (
            self.actions == other.actions
            and self.rewards == other.rewards
            and all(a.tobytes() == b.tobytes() for a, b in zip(self.keys, other.keys))
        )


def select_action(store: QECStore, key: np.ndarray, cfg: AgentConfig,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy choice; greedy ties are broken uniformly with ``rng``.

    Empty buffers estimate +inf, so every action is tried at least once.
    """
    return _select(store, store._check_key(key), cfg, rng)


def _select(store: QECStore, key: np.ndarray, cfg: AgentConfig, rng: np.random.Generator) -> int:
    # ``key`` must already be a contiguous float64 vector of the store's dim
    if rng.random() < cfg.epsilon:
        return int(rng.integers(store.num_actions))
    best = store._greedy(key, cfg.k)
    if len(best) == 1:
        return int(best[0])
    return int(best[rng.integers(len(best))])


def compute_returns(rewards, gamma: float) -> list[float]:
    """Backward discounted returns: R_T = r_T, R_t = r_t + gamma * R_{t+1}."""
    if isinstance(rewards, EpisodeTrace):
        rewards = rewards.rewards
    if len(rewards) == 0:
        raise InputError("cannot compute returns of an empty trace")
    out = [0.0] * len(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = float(rewards[t]) + gamma * acc
        out[t] = acc
    return out


def finish_episode(store: QECStore, trace: EpisodeTrace, cfg: AgentConfig) -> list[WritebackOutcome]:
    """Write every step's return back into the store, last step first."""
    returns = compute_returns(trace.rewards, cfg.gamma)
    return store.writeback_episode(trace.keys, trace.actions, returns, cfg.eps_in, cfg.eps_out)


@dataclass
class EpisodeResult:
    trace: EpisodeTrace
    score: float
    outcomes: list[WritebackOutcome]
    """Per-step writeback outcomes; empty when run with ``detail=False``."""
    branch_counts: dict[Branch, int]


def run_episode(env, store: QECStore, proj: ProjectionMatrix, cfg: AgentConfig,
                rng: np.random.Generator, reset_seed: int | None = None,
                observation=None, detail: bool = True) -> EpisodeResult:
    """Play one episode to termination (or the env's step cap) and learn from it.

    Pass ``observation`` when the environment was already reset by the
    caller; otherwise it is reset here with ``reset_seed``. With
    ``detail=False`` only per-branch counts of the writeback are kept.
    """
    obs = env.reset(0 if reset_seed is None else reset_seed) if observation is None else observation
    trace = EpisodeTrace()
    score = 0.0
    done = False
    key = store._check_key(embed(proj, obs))  # validate shapes once per episode
    # hot loop: same draws as _select, with lookups hoisted
    weights, greedy, step, random = proj.weights, store._greedy, env.step, rng.random
    keys, actions, rewards = trace.keys, trace.actions, trace.rewards
    epsilon, k, num_actions = cfg.epsilon, cfg.k, store.num_actions
    while not done:
        if random() < epsilon:
            action = int(rng.integers(num_actions))
        else:
            best = greedy(key, k)
            action = int(best[0]) if len(best) == 1 else int(best[rng.integers(len(best))])
        obs, reward, done = step(action)
        keys.append(key)
        actions.append(action)
        rewards.append(reward)
        score += reward
        if not done:
            key = weights @ obs
    outcomes: list[WritebackOutcome] = []
    counts = dict.fromkeys(Branch, 0)
    if len(trace) and detail:
        outcomes = finish_episode(store, trace, cfg)
        for o in outcomes:
            counts[o.branch] += 1
    elif len(trace):
        returns = compute_returns(trace.rewards, cfg.gamma)
        codes = store.writeback_branches(trace.keys, trace.actions, returns, cfg.eps_in, cfg.eps_out)
        for b, n in zip(Branch, np.bincount(codes, minlength=len(Branch))):
            counts[b] = int(n)
    return EpisodeResult(trace, score, outcomes, counts)
