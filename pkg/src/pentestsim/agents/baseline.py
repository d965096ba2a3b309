"""Uniform-random attacker, used as the untrained baseline."""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from typing import Callable

from ..env import RandomStream, action_space, reset, step
from ..network import Network
from .common import EpisodeRecord, UniformPolicy, uniform_index


@dataclass
class RandomResult:
    log: list[EpisodeRecord] = field(default_factory=list)

    @property
    def policy(self) -> UniformPolicy:
        return UniformPolicy()


def train_random(
    net: Network,
    budget: float = 120.0,
    max_steps: int = 500,
    rng: RandomStream | None = None,
    max_episodes: int | None = None,
    clock: Callable[[], float] = time.perf_counter,
) -> RandomResult:
    """Play uniformly random episodes for the budget; nothing is learned, but the
    log has the same shape as the learning agents' logs."""
    rng = rng if rng is not None else random.Random(0)
    n_actions = len(action_space(net))
    result = RandomResult()
    if budget <= 0:
        return result
    start = clock()
    cum = 0
    episode = 0
    while clock() - start < budget and (max_episodes is None or episode < max_episodes):
        s = reset(net)
        ret = 0.0
        t = 0
        for t in range(1, max_steps + 1):
            s, r, done = step(net, s, uniform_index(rng, n_actions), rng)
            cum += 1
            ret += r
            if done:
                break
        result.log.append(EpisodeRecord(episode, t, ret, cum, clock() - start))
        episode += 1
    return result
