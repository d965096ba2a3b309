"""Tabular Q-learning with epsilon-greedy or UCB action selection.

Both agents key a hash map on the canonical state bytes and share the
one-step Q-learning update; they differ only in how an action is picked.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal

import numpy as np

from ..env import RandomStream, State, action_space, canonical_key, reset, step
from ..network import Network
from .common import EpisodeRecord, epsilon_decay, uniform_index

AgentKind = Literal["tabular-eps", "tabular-ucb"]


@dataclass(frozen=True)
class TabularHyperparams:
    alpha: float = 0.1
    gamma: float = 0.99
    eps_max: float = 1.0
    eps_min: float = 0.05
    lambda_decay: float = 0.0001
    c: float = 0.5
    init_value: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must be in [0, 1]")
        if self.eps_min > self.eps_max:
            raise ValueError("eps_min must not exceed eps_max")


class QTable:
    """Action values per canonical state key, zero (or ``init_value``) on first touch."""

    def __init__(self, n_actions: int, init_value: float = 0.0):
        self.n_actions = n_actions
        self.init_value = init_value
        self.values: dict[bytes, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.values)

    def row(self, key: bytes) -> np.ndarray:
        r = self.values.get(key)
        if r is None:
            r = self.values[key] = np.full(self.n_actions, self.init_value)
        return r

    def peek(self, key: bytes) -> np.ndarray:
        r = self.values.get(key)
        return r if r is not None else np.full(self.n_actions, self.init_value)

    def greedy_action(self, state: State) -> int:
        return int(np.argmax(self.peek(canonical_key(state))))

    def save(self, path: str | Path) -> None:
        keys = list(self.values)
        key_len = len(keys[0]) if keys else 0
        key_arr = np.frombuffer(b"".join(keys), dtype=np.uint8).reshape(len(keys), key_len)
        vals = np.array([self.values[k] for k in keys]).reshape(len(keys), self.n_actions)
        np.savez(path, kind=np.array("qtable"), keys=key_arr, values=vals,
                 init_value=np.array(self.init_value))

    @classmethod
    def load(cls, path: str | Path) -> "QTable":
        with np.load(path) as data:
            vals = data["values"]
            table = cls(vals.shape[1], float(data["init_value"]))
            for k, v in zip(data["keys"], vals):
                table.values[k.tobytes()] = v.copy()
        return table


class VisitCounts:
    def __init__(self, n_actions: int):
        self.n_actions = n_actions
        self.counts: dict[bytes, np.ndarray] = {}
        self.total: dict[bytes, int] = {}

    def row(self, key: bytes) -> np.ndarray:
        r = self.counts.get(key)
        if r is None:
            r = self.counts[key] = np.zeros(self.n_actions, dtype=np.int64)
            self.total[key] = 0
        return r

    def increment(self, key: bytes, a: int) -> None:
        self.row(key)[a] += 1
        self.total[key] += 1


def epsilon_greedy_select(qrow: np.ndarray, eps: float, rng: RandomStream) -> int:
    """Uniform action with probability ``eps``, else argmax (lowest index on ties)."""
    n = len(qrow)
    if n == 0:
        raise ValueError("qrow must be non-empty")
    if eps > 0 and rng.random() < eps:
        return uniform_index(rng, n)
    return int(np.argmax(qrow))


def ucb_select(qrow: np.ndarray, counts_row: np.ndarray, state_total: int, c: float) -> int:
    """Upper-confidence action choice; untried actions come first, lowest index first."""
    untried = np.flatnonzero(counts_row == 0)
    if untried.size:
        return int(untried[0])
    bonus = c * np.sqrt(math.log(state_total) / counts_row)
    return int(np.argmax(qrow + bonus))


def q_update(
    qrow_s: np.ndarray, a: int, r: float, qrow_next: np.ndarray | None, h: TabularHyperparams
) -> float:
    """One Q-learning step on ``qrow_s[a]`` in place; ``qrow_next=None`` marks a terminal
    successor, which bootstraps from 0.  Returns the new value."""
    target = r if qrow_next is None else r + h.gamma * float(qrow_next.max())
    q = float(qrow_s[a])
    new = q + h.alpha * (target - q)
    qrow_s[a] = new
    return new


@dataclass
class TabularResult:
    qtable: QTable
    log: list[EpisodeRecord] = field(default_factory=list)
    counts: VisitCounts | None = None


def train_tabular(
    net: Network,
    kind: AgentKind = "tabular-eps",
    h: TabularHyperparams | None = None,
    budget: float = 120.0,
    max_steps: int = 500,
    rng: RandomStream | None = None,
    max_episodes: int | None = None,
    clock: Callable[[], float] = time.perf_counter,
) -> TabularResult:
    """Train until the wall-clock ``budget`` (seconds) or ``max_episodes`` runs out.

    The clock is only checked between episodes.  Epsilon decays with the
    cumulative number of environment steps.
    """
    if kind not in ("tabular-eps", "tabular-ucb"):
        raise ValueError(f"unknown tabular agent kind {kind!r}")
    h = h or TabularHyperparams()
    rng = rng if rng is not None else random.Random(0)
    n_actions = len(action_space(net))
    q = QTable(n_actions, h.init_value)
    ucb = kind == "tabular-ucb"
    counts = VisitCounts(n_actions) if ucb else None
    result = TabularResult(q, [], counts)
    if budget <= 0:
        return result

    start = clock()
    cum = 0
    episode = 0
    while clock() - start < budget and (max_episodes is None or episode < max_episodes):
        s = reset(net)
        key = canonical_key(s)
        row = q.row(key)
        ret = 0.0
        t = 0
        for t in range(1, max_steps + 1):
            if ucb:
                crow = counts.row(key)
                a = ucb_select(row, crow, counts.total[key], h.c)
            else:
                a = epsilon_greedy_select(row, epsilon_decay(cum, h), rng)
            s, r, done = step(net, s, a, rng)
            cum += 1
            ret += r
            if done:
                q_update(row, a, r, None, h)
            else:
                key_next = canonical_key(s)
                row_next = q.row(key_next)
                q_update(row, a, r, row_next, h)
            if ucb:
                crow[a] += 1
                counts.total[key] += 1
            if done:
                break
            key, row = key_next, row_next
        result.log.append(EpisodeRecord(episode, t, ret, cum, clock() - start))
        episode += 1
    return result
