"""Pieces shared by every agent: episode records, the policy protocol and
epsilon-greedy policy evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from ..env import RandomStream, State, action_space, reset, step
from ..network import Network


@dataclass
class EpisodeRecord:
    episode: int
    steps: int
    ret: float
    cum_steps: int
    wall_clock_s: float

    def row(self) -> dict:
        return {
            "episode": self.episode,
            "steps": self.steps,
            "return": self.ret,
            "cum_steps": self.cum_steps,
            "wall_clock_s": self.wall_clock_s,
        }


@dataclass
class RunRecord:
    run: int
    steps: int
    ret: float
    solved: bool

    def row(self) -> dict:
        return {"run": self.run, "steps": self.steps, "return": self.ret, "solved": int(self.solved)}


@dataclass
class EvalResult:
    solved_prop: float
    max_return: float | None
    mean_return: float | None
    stderr: float | None
    runs: list[RunRecord] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "runs": len(self.runs),
            "solved_prop": self.solved_prop,
            "max_return": self.max_return,
            "mean_return": self.mean_return,
            "stderr": self.stderr,
        }


class Policy(Protocol):
    """Anything mapping a state to a preferred action index."""

    def greedy_action(self, state: State) -> int: ...


class UniformPolicy:
    """Baseline that ignores the state; evaluate it with ``eps=1``."""

    def greedy_action(self, state: State) -> int:
        return 0


def epsilon_decay(t: float, h) -> float:
    """Exponential decay from ``h.eps_max`` towards ``h.eps_min`` with rate ``h.lambda_decay``."""
    return h.eps_min + (h.eps_max - h.eps_min) * math.exp(-h.lambda_decay * t)


def uniform_index(rng: RandomStream, n: int) -> int:
    """Uniform integer in ``[0, n)`` from any stream exposing ``random()``."""
    return min(int(rng.random() * n), n - 1)


def standard_error(values: Sequence[float]) -> float:
    n = len(values)
    if n < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(n))


def smoothed_returns(returns: Sequence[float], window: int = 100) -> np.ndarray:
    """Trailing mean over (up to) the last ``window`` episodes."""
    r = np.asarray(returns, dtype=float)
    if r.size == 0:
        return r
    c = np.cumsum(np.concatenate([[0.0], r]))
    idx = np.arange(1, r.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def run_episode(
    net: Network, policy: Policy, eps: float, max_steps: int, rng: RandomStream
) -> tuple[int, float, bool]:
    n_actions = len(action_space(net))
    s = reset(net)
    total = 0.0
    for t in range(max_steps):
        if rng.random() < eps:
            a = uniform_index(rng, n_actions)
        else:
            a = policy.greedy_action(s)
        s, r, done = step(net, s, a, rng)
        total += r
        if done:
            return t + 1, total, True
    return max_steps, total, False


def greedy_policy_eval(
    net: Network,
    policy: Policy,
    eps: float = 0.05,
    runs: int = 30,
    max_steps: int = 500,
    rng: RandomStream | None = None,
) -> EvalResult:
    """Run ``runs`` independent epsilon-greedy episodes and aggregate them."""
    if rng is None:
        import random

        rng = random.Random(0)
    records = []
    for k in range(runs):
        steps, ret, solved = run_episode(net, policy, eps, max_steps, rng)
        records.append(RunRecord(k, steps, ret, solved))
    if not records:
        return EvalResult(0.0, None, None, None, [])
    rets = [r.ret for r in records]
    return EvalResult(
        solved_prop=sum(r.solved for r in records) / len(records),
        max_return=max(rets),
        mean_return=float(np.mean(rets)),
        stderr=standard_error(rets),
        runs=records,
    )
