"""Deep Q-learning with experience replay and a target network.

The value network is a single ReLU hidden layer written directly in numpy,
with hand-derived gradients and an RMSprop optimiser.  Training runs in
single precision; pass ``dtype=np.float64`` for gradient checks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..env import KNOWLEDGE, State, action_space, reset, step
from ..network import Network
from .common import EpisodeRecord, epsilon_decay


@dataclass(frozen=True)
class DQLHyperparams:
    gamma: float = 0.99
    eps_max: float = 1.0
    eps_min: float = 0.05
    lambda_decay: float = 0.0001
    minibatch: int = 32
    hidden: int = 256
    replay_capacity: int = 10_000
    target_sync_every: int = 1000
    lr: float = 0.00025
    rho: float = 0.9
    rms_eps: float = 1e-6
    grad_clip: float | None = None

    def __post_init__(self):
        if self.minibatch > self.replay_capacity:
            raise ValueError("minibatch cannot exceed replay capacity")


def vectorize(s: State, dtype=np.float32) -> np.ndarray:
    """Flat per-machine encoding: compromised, reachable, then 1/-1/0 per service."""
    return s.grid.astype(dtype).ravel()


def devectorize(x: np.ndarray, net: Network) -> State:
    grid = np.rint(np.asarray(x)).astype(np.int8).reshape(net.num_machines, KNOWLEDGE + net.num_services)
    return State(grid)


@dataclass
class QNetwork:
    W1: np.ndarray  # hidden x input
    b1: np.ndarray
    W2: np.ndarray  # output x hidden
    b2: np.ndarray

    @classmethod
    def init(
        cls, n_in: int, n_out: int, hidden: int = 256,
        rng: np.random.Generator | None = None, dtype=np.float32,
    ) -> "QNetwork":
        rng = rng if rng is not None else np.random.default_rng(0)

        def glorot(fan_out, fan_in):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_out, fan_in)).astype(dtype)

        return cls(
            glorot(hidden, n_in), np.zeros(hidden, dtype),
            glorot(n_out, hidden), np.zeros(n_out, dtype),
        )

    @property
    def params(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2]

    def copy(self) -> "QNetwork":
        return QNetwork(*(p.copy() for p in self.params))

    def load_from(self, other: "QNetwork") -> None:
        for dst, src in zip(self.params, other.params):
            np.copyto(dst, src)

    def save(self, path: str | Path) -> None:
        np.savez(path, kind=np.array("qnetwork"), W1=self.W1, b1=self.b1, W2=self.W2, b2=self.b2)

    @classmethod
    def load(cls, path: str | Path) -> "QNetwork":
        with np.load(path) as data:
            return cls(data["W1"], data["b1"], data["W2"], data["b2"])


def forward(netw: QNetwork, x: np.ndarray) -> np.ndarray:
    """Action values for one state vector or a batch (rows)."""
    if x.shape[-1] != netw.W1.shape[1]:
        raise ValueError(f"input has {x.shape[-1]} features, network expects {netw.W1.shape[1]}")
    h = x @ netw.W1.T + netw.b1
    np.maximum(h, 0, out=h)
    return h @ netw.W2.T + netw.b2


def loss_and_grads(
    netw: QNetwork, x: np.ndarray, a: np.ndarray, y: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Mean squared TD error over the batch and its gradient w.r.t. each parameter."""
    n = x.shape[0]
    z = x @ netw.W1.T + netw.b1
    h = np.maximum(z, 0)
    q = h @ netw.W2.T + netw.b2
    rows = np.arange(n)
    diff = q[rows, a] - y
    loss = float(np.mean(diff * diff))
    dq = np.zeros_like(q)
    dq[rows, a] = 2.0 * diff / n
    dW2 = dq.T @ h
    db2 = dq.sum(axis=0)
    dz = (dq @ netw.W2) * (z > 0)
    dW1 = dz.T @ x
    db1 = dz.sum(axis=0)
    return loss, [dW1, db1, dW2, db2]


def td_targets(batch: "Batch", target: QNetwork, gamma: float) -> np.ndarray:
    """``r`` for terminal transitions, else ``r + gamma * max_a' Q_target(s', a')``."""
    if len(batch.rewards) == 0:
        raise ValueError("empty batch")
    best_next = forward(target, batch.next_states).max(axis=1)
    return batch.rewards + gamma * best_next * (~batch.dones)


def rmsprop_step(
    params: list[np.ndarray], grads: list[np.ndarray], accum: list[np.ndarray], h: DQLHyperparams
) -> None:
    """In-place update: ``m = rho*m + (1-rho)*g^2``, ``p -= lr * g / sqrt(m + eps)``."""
    for p, g, m in zip(params, grads, accum):
        if h.grad_clip is not None:
            g = np.clip(g, -h.grad_clip, h.grad_clip)
        m *= h.rho
        m += (1.0 - h.rho) * g * g
        p -= (h.lr * g / np.sqrt(m + h.rms_eps)).astype(p.dtype, copy=False)


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring of transitions; the oldest entry is overwritten first."""

    def __init__(self, capacity: int, n_features: int, dtype=np.float32):
        self.capacity = capacity
        self.states = np.zeros((capacity, n_features), dtype)
        self.next_states = np.zeros((capacity, n_features), dtype)
        self.actions = np.zeros(capacity, dtype=np.intp)
        self.rewards = np.zeros(capacity, dtype)
        self.dones = np.zeros(capacity, dtype=bool)
        self.pos = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, s: np.ndarray, a: int, r: float, s_next: np.ndarray, done: bool) -> None:
        i = self.pos
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s_next
        self.dones[i] = done
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def slots(self, idx: np.ndarray) -> Batch:
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.dones[idx])

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self.size, size=n)

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        return self.slots(self.sample_indices(n, rng))

    def ordered(self) -> Batch:
        """Stored transitions oldest first."""
        if self.size < self.capacity:
            idx = np.arange(self.size)
        else:
            idx = (np.arange(self.capacity) + self.pos) % self.capacity
        return self.slots(idx)


class DQLPolicy:
    def __init__(self, qnet: QNetwork):
        self.qnet = qnet

    def greedy_action(self, state: State) -> int:
        return int(np.argmax(forward(self.qnet, vectorize(state, self.qnet.W1.dtype))))


@dataclass
class DQLResult:
    qnet: QNetwork
    target: QNetwork
    log: list[EpisodeRecord] = field(default_factory=list)
    # mean minibatch loss per episode (nan before learning starts)
    losses: list[float] = field(default_factory=list)

    @property
    def policy(self) -> DQLPolicy:
        return DQLPolicy(self.qnet)


def train_dql(
    net: Network,
    h: DQLHyperparams | None = None,
    budget: float = 120.0,
    max_steps: int = 500,
    rng: np.random.Generator | int | None = None,
    max_episodes: int | None = None,
    on_sync: Callable[[int, QNetwork, QNetwork], None] | None = None,
    clock: Callable[[], float] = time.perf_counter,
) -> DQLResult:
    """Deep Q-learning until ``budget`` seconds (checked between episodes) or
    ``max_episodes`` runs out.  Learning starts once the buffer holds one minibatch."""
    h = h or DQLHyperparams()
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    n_in = net.num_machines * (KNOWLEDGE + net.num_services)
    n_out = len(action_space(net))
    qnet = QNetwork.init(n_in, n_out, h.hidden, rng)
    target = qnet.copy()
    result = DQLResult(qnet, target)
    if budget <= 0:
        return result
    accum = [np.zeros_like(p) for p in qnet.params]
    buf = ReplayBuffer(h.replay_capacity, n_in)

    start = clock()
    cum = 0
    episode = 0
    while clock() - start < budget and (max_episodes is None or episode < max_episodes):
        s = reset(net)
        x = vectorize(s)
        ret = 0.0
        loss_sum, n_updates = 0.0, 0
        t = 0
        for t in range(1, max_steps + 1):
            if rng.random() < epsilon_decay(cum, h):
                a = int(rng.integers(n_out))
            else:
                a = int(np.argmax(forward(qnet, x)))
            s, r, done = step(net, s, a, rng)
            x_next = vectorize(s)
            buf.add(x, a, r, x_next, done)
            cum += 1
            ret += r
            if len(buf) >= h.minibatch:
                batch = buf.sample(h.minibatch, rng)
                y = td_targets(batch, target, h.gamma)
                loss, grads = loss_and_grads(qnet, batch.states, batch.actions, y)
                rmsprop_step(qnet.params, grads, accum, h)
                loss_sum += loss
                n_updates += 1
            if cum % h.target_sync_every == 0:
                target.load_from(qnet)
                if on_sync is not None:
                    on_sync(cum, qnet, target)
            if done:
                break
            x = x_next
        result.log.append(EpisodeRecord(episode, t, ret, cum, clock() - start))
        result.losses.append(loss_sum / n_updates if n_updates else float("nan"))
        episode += 1
    return result
