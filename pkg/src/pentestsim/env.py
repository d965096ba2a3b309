"""Attacker-knowledge MDP over a :class:`~pentestsim.network.Network`.

A state is an ``int8`` grid with one row per machine (address order) and
``2 + |E|`` columns: compromised flag, reachable flag, then one knowledge cell
per service (``1`` present, ``-1`` absent, ``0`` unknown).  The grid is
read-only; :func:`step` returns a new :class:`State` whenever something
changes and the same object otherwise.

The functions here are pure in (network, state, action, random draw).
:class:`NetworkAttackEnv` wraps them in the usual reset/step lifecycle.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Protocol

import numpy as np

from .network import Address, Network

COMPROMISED = 0
REACHABLE = 1
KNOWLEDGE = 2


class InvalidActionError(ValueError):
    pass


class RandomStream(Protocol):
    def random(self) -> float: ...


class ServiceKnowledge(enum.IntEnum):
    ABSENT = -1
    UNKNOWN = 0
    PRESENT = 1


class ActionKind(enum.Enum):
    SCAN = "scan"
    EXPLOIT = "exploit"


@dataclass(frozen=True)
class Action:
    target: Address
    kind: ActionKind
    service: str | None = None
    cost: float = 1.0
    prob: float = 1.0

    def __str__(self) -> str:
        if self.kind is ActionKind.SCAN:
            return f"scan {self.target}"
        return f"exploit {self.service} on {self.target}"


@dataclass(frozen=True)
class MachineState:
    compromised: bool
    reachable: bool
    knowledge: dict[str, ServiceKnowledge]


class State:
    """Read-only view over the knowledge grid."""

    __slots__ = ("grid",)

    def __init__(self, grid: np.ndarray):
        if grid.dtype != np.int8 or grid.ndim != 2:
            raise TypeError("state grid must be a 2-D int8 array")
        if grid.flags.writeable:
            grid = grid.copy()
            grid.flags.writeable = False
        self.grid = grid

    @property
    def compromised(self) -> np.ndarray:
        return self.grid[:, COMPROMISED].astype(bool)

    @property
    def reachable(self) -> np.ndarray:
        return self.grid[:, REACHABLE].astype(bool)

    @property
    def knowledge(self) -> np.ndarray:
        return self.grid[:, KNOWLEDGE:]

    def machine_state(self, net: Network, address: Address | tuple[int, int]) -> MachineState:
        row = self.grid[net.address_index[Address(*address)]]
        return MachineState(
            compromised=bool(row[COMPROMISED]),
            reachable=bool(row[REACHABLE]),
            knowledge={
                sid: ServiceKnowledge(int(v)) for sid, v in zip(net.service_ids, row[KNOWLEDGE:])
            },
        )

    def per_machine(self, net: Network) -> dict[Address, MachineState]:
        return {a: self.machine_state(net, a) for a in net.addresses}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, State):
            return NotImplemented
        return self.grid.shape == other.grid.shape and bool(np.array_equal(self.grid, other.grid))

    def __hash__(self) -> int:
        return hash(self.grid.tobytes())

    def __repr__(self) -> str:
        return (
            f"State(compromised={int(self.grid[:, 0].sum())}, "
            f"reachable={int(self.grid[:, 1].sum())}, machines={self.grid.shape[0]})"
        )


class StepResult(NamedTuple):
    next_state: State
    reward: float
    done: bool


class _Tables:
    """Per-network lookup arrays; built once and cached on the network."""

    def __init__(self, net: Network):
        n_svc = net.num_services
        actions: list[Action] = []
        machine, service, cost, prob = [], [], [], []
        for i, addr in enumerate(net.addresses):
            actions.append(Action(addr, ActionKind.SCAN, None, net.scan_cost, 1.0))
            machine.append(i)
            service.append(-1)
            cost.append(net.scan_cost)
            prob.append(1.0)
            for j, svc in enumerate(net.services):
                actions.append(
                    Action(addr, ActionKind.EXPLOIT, svc.id, svc.exploit_cost, svc.exploit_prob)
                )
                machine.append(i)
                service.append(j)
                cost.append(svc.exploit_cost)
                prob.append(svc.exploit_prob)
        self.actions = tuple(actions)
        self.action_index = {a: k for k, a in enumerate(actions)}
        self.machine = machine
        self.service = service
        self.cost = cost
        self.prob = prob

        self.sizes = np.asarray(net.subnet_sizes, dtype=np.intp)
        self.starts = net.subnet_start[1:-1].copy()
        self.bounds = [(int(net.subnet_start[s]), int(net.subnet_start[s + 1]))
                       for s in range(net.num_subnets + 1)]
        self.machine_subnet = [int(s) for s in net.machine_subnet]
        self.public = net.topology[0, 1:].copy()
        self.inner_adj = net.topology[1:, 1:].copy()
        self.values = [float(v) for v in net.values]
        self.sensitive = net.sensitive_index
        self.scan_rows = np.where(net.config_matrix, 1, -1).astype(np.int8)
        self.config = net.config_matrix
        # inbound routes per subnet: (source subnet, lo, hi, firewall mask)
        self.inbound: list[list[tuple[int, int, int, np.ndarray]]] = []
        empty = np.zeros(n_svc, dtype=bool)
        for t in range(net.num_subnets + 1):
            routes = []
            for src in net.neighbours[t]:
                lo, hi = self.bounds[src]
                routes.append((src, lo, hi, net.firewall_mask.get((src, t), empty)))
            self.inbound.append(routes)

        grid = np.zeros((net.num_machines, KNOWLEDGE + n_svc), dtype=np.int8)
        grid[:, REACHABLE] = np.repeat(self.public, self.sizes)
        self.initial = State(grid)


def _tables(net: Network) -> _Tables:
    tbl = net._cache.get("env")
    if tbl is None:
        tbl = net._cache["env"] = _Tables(net)
    return tbl


def action_space(net: Network) -> list[Action]:
    """All actions in index order: per machine (address order) one scan then one
    exploit per service in service-list order."""
    return list(_tables(net).actions)


def action_index(net: Network, a: Action) -> int:
    try:
        return _tables(net).action_index[a]
    except KeyError:
        raise InvalidActionError(f"{a} is not in this network's action space") from None


def reset(net: Network) -> State:
    return _tables(net).initial


def _reach_into(tbl: _Tables, grid: np.ndarray) -> None:
    comp_sub = np.logical_or.reduceat(grid[:, COMPROMISED].astype(bool), tbl.starts)
    reach_sub = tbl.public | comp_sub
    if comp_sub.any():
        reach_sub |= tbl.inner_adj[comp_sub].any(axis=0)
    grid[:, REACHABLE] |= np.repeat(reach_sub, tbl.sizes).astype(np.int8)


def recompute_reachability(net: Network, s: State) -> State:
    grid = s.grid.copy()
    _reach_into(_tables(net), grid)
    if np.array_equal(grid, s.grid):
        return s
    return State(grid)


def _feasible(tbl: _Tables, grid: np.ndarray, m: int, j: int) -> bool:
    if not grid[m, REACHABLE] or not tbl.config[m, j]:
        return False
    t = tbl.machine_subnet[m]
    lo, hi = tbl.bounds[t]
    if grid[lo:hi, COMPROMISED].any():
        return True
    for src, lo, hi, mask in tbl.inbound[t]:
        if not mask[j]:
            continue
        if src == 0 or grid[lo:hi, COMPROMISED].any():
            return True
    return False


def exploit_feasible(net: Network, s: State, a: Action) -> bool:
    """Whether ``a`` would compromise its target if the success draw passes."""
    if a.kind is not ActionKind.EXPLOIT:
        raise InvalidActionError("exploit_feasible expects an exploit action")
    k = action_index(net, a)
    tbl = _tables(net)
    return _feasible(tbl, s.grid, tbl.machine[k], tbl.service[k])


def is_done(net: Network, s: State) -> bool:
    tbl = _tables(net)
    return bool(s.grid[tbl.sensitive, COMPROMISED].all())


def step(net: Network, s: State, a: Action | int, rng: RandomStream) -> StepResult:
    """Apply one action.  ``a`` may be an :class:`Action` or its index."""
    tbl = _tables(net)
    if isinstance(a, Action):
        k = action_index(net, a)
    else:
        k = int(a)
        if not 0 <= k < len(tbl.actions):
            raise InvalidActionError(f"action index {k} out of range")
    m = tbl.machine[k]
    j = tbl.service[k]
    cost = tbl.cost[k]
    grid = s.grid

    if j < 0:
        if grid[m, REACHABLE]:
            row = tbl.scan_rows[m]
            if not np.array_equal(grid[m, KNOWLEDGE:], row):
                grid = grid.copy()
                grid[m, KNOWLEDGE:] = row
                s = State(grid)
        return StepResult(s, -cost, bool(grid[tbl.sensitive, COMPROMISED].all()))

    if _feasible(tbl, grid, m, j):
        p = tbl.prob[k]
        if p >= 1.0 or rng.random() < p:
            newly = not grid[m, COMPROMISED]
            if newly or grid[m, KNOWLEDGE + j] != ServiceKnowledge.PRESENT:
                grid = grid.copy()
                grid[m, COMPROMISED] = 1
                grid[m, KNOWLEDGE + j] = ServiceKnowledge.PRESENT
                if newly:
                    _reach_into(tbl, grid)
                s = State(grid)
            reward = (tbl.values[m] if newly else 0.0) - cost
            return StepResult(s, reward, bool(grid[tbl.sensitive, COMPROMISED].all()))
    return StepResult(s, -cost, bool(grid[tbl.sensitive, COMPROMISED].all()))


def state_space_size_bound(net: Network) -> int:
    """Naive cross-product count ``(2 * 2 * 3**|E|) ** |M|``."""
    return (4 * 3 ** net.num_services) ** net.num_machines


def canonical_key(s: State) -> bytes:
    # one byte per field, row-major; stable across processes
    return s.grid.tobytes()


class NetworkAttackEnv:
    """Stateful wrapper: ``reset`` then ``step`` until ``done``.

    The episode step cap is the caller's business (see the harness).
    """

    def __init__(self, network: Network, seed: int | None = None, rng: RandomStream | None = None):
        self.network = network
        self.rng = rng if rng is not None else random.Random(seed)
        self.actions = action_space(network)
        self.state = reset(network)
        self.done = False

    @classmethod
    def load(cls, path: str | Path, seed: int | None = None) -> "NetworkAttackEnv":
        from .scenario import load_scenario

        return cls(load_scenario(Path(path).read_text()), seed=seed)

    @classmethod
    def generate(cls, num_machines: int, num_services: int, seed: int = 0, **kwargs) -> "NetworkAttackEnv":
        from .scenario import GeneratorParams, generate_network

        params = GeneratorParams(num_machines, num_services, seed=seed, **kwargs)
        return cls(generate_network(params), seed=seed)

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    def reset(self) -> State:
        self.state = reset(self.network)
        self.done = False
        return self.state

    def step(self, action: Action | int) -> StepResult:
        result = step(self.network, self.state, action, self.rng)
        self.state = result.next_state
        self.done = result.done
        return result

    def render(self, episode):
        from .render import render_trace

        return render_trace(self.network, episode)
