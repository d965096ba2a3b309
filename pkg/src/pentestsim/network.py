"""Static description of an attack scenario.

A :class:`Network` is the ground truth the attacker never sees directly:
subnet sizes, the subnet adjacency matrix (row/column 0 is the external
network), machines with their values and running services, the set of
exploitable services and the per-direction firewall rules.

Besides the plain fields, a network keeps a handful of numpy arrays derived
at construction time (machine -> subnet, slice offsets, a service matrix,
firewall masks) which the transition code uses in its hot path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np


class NetworkError(Exception):
    """Base class for errors raised by network queries."""


class InvalidSubnetError(NetworkError, IndexError):
    pass


class NoRouteError(NetworkError):
    pass


class Address(NamedTuple):
    subnet: int
    machine: int

    def __str__(self) -> str:
        return f"({self.subnet}, {self.machine})"


@dataclass(frozen=True)
class Service:
    id: str
    exploit_prob: float = 1.0
    exploit_cost: float = 1.0


@dataclass(frozen=True)
class Machine:
    address: Address
    value: float
    config: Mapping[str, bool] = field(hash=False)

    @property
    def services(self) -> list[str]:
        return [sid for sid, running in self.config.items() if running]

    @property
    def sensitive(self) -> bool:
        return self.value > 0


class Network:
    """Immutable scenario ground truth.

    ``firewall`` maps a directed ``(src_subnet, dst_subnet)`` pair to the set of
    service ids allowed through in that direction.  Construction only checks
    shapes; semantic problems are reported by :func:`validate`.
    """

    def __init__(
        self,
        subnet_sizes: Sequence[int],
        topology: Sequence[Sequence[bool]] | np.ndarray,
        machines: Iterable[Machine],
        services: Sequence[Service],
        firewall: Mapping[tuple[int, int], Iterable[str]],
        scan_cost: float = 1.0,
    ):
        self.subnet_sizes: tuple[int, ...] = tuple(int(n) for n in subnet_sizes)
        adj = np.array(topology, dtype=bool)
        n = len(self.subnet_sizes) + 1
        if adj.shape != (n, n):
            raise ValueError(
                f"topology must be {n}x{n} (subnets plus external row), got {adj.shape}"
            )
        adj.flags.writeable = False
        self.topology = adj
        self.machines: tuple[Machine, ...] = tuple(
            sorted(machines, key=lambda m: m.address)
        )
        self.services: tuple[Service, ...] = tuple(services)
        self.firewall: dict[tuple[int, int], frozenset[str]] = {
            (int(a), int(b)): frozenset(str(s) for s in allowed)
            for (a, b), allowed in firewall.items()
        }
        self.scan_cost = float(scan_cost)
        self._build_index()

    def _build_index(self) -> None:
        self.service_ids: tuple[str, ...] = tuple(s.id for s in self.services)
        self.service_index = {sid: i for i, sid in enumerate(self.service_ids)}
        self.addresses: tuple[Address, ...] = tuple(m.address for m in self.machines)
        self.address_index = {a: i for i, a in enumerate(self.addresses)}

        n_sub = len(self.subnet_sizes)
        starts = np.zeros(n_sub + 2, dtype=np.intp)
        starts[2:] = np.cumsum(self.subnet_sizes)
        # subnet s occupies machine rows starts[s]:starts[s + 1]
        self.subnet_start = starts
        self.machine_subnet = np.array([a.subnet for a in self.addresses], dtype=np.intp)
        self.values = np.array([m.value for m in self.machines], dtype=float)
        cfg = np.zeros((len(self.machines), len(self.services)), dtype=bool)
        for i, m in enumerate(self.machines):
            for sid, running in m.config.items():
                j = self.service_index.get(sid)
                if j is not None and running:
                    cfg[i, j] = True
        cfg.flags.writeable = False
        self.config_matrix = cfg
        self.sensitive_index = np.flatnonzero(self.values > 0)
        self.neighbours: list[list[int]] = [
            [int(b) for b in np.flatnonzero(self.topology[a]) if b != a]
            for a in range(n_sub + 1)
        ]
        masks = {}
        for (a, b), allowed in self.firewall.items():
            mask = np.zeros(len(self.services), dtype=bool)
            for sid in allowed:
                j = self.service_index.get(sid)
                if j is not None:
                    mask[j] = True
            masks[(a, b)] = mask
        self.firewall_mask = masks
        self._cache: dict = {}

    # -- plain accessors -------------------------------------------------
    @property
    def num_subnets(self) -> int:
        return len(self.subnet_sizes)

    @property
    def num_machines(self) -> int:
        return len(self.machines)

    @property
    def num_services(self) -> int:
        return len(self.services)

    @property
    def sensitive_addresses(self) -> list[Address]:
        return [m.address for m in self.machines if m.value > 0]

    def machine(self, address: Address | tuple[int, int]) -> Machine:
        return self.machines[self.address_index[Address(*address)]]

    def subnet_slice(self, subnet: int) -> slice:
        return slice(int(self.subnet_start[subnet]), int(self.subnet_start[subnet + 1]))

    def public_subnets(self) -> list[int]:
        return [s for s in self.neighbours[0]]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.subnet_sizes == other.subnet_sizes
            and np.array_equal(self.topology, other.topology)
            and self.machines == other.machines
            and self.services == other.services
            and self.firewall == other.firewall
            and self.scan_cost == other.scan_cost
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return (
            f"Network(subnets={list(self.subnet_sizes)}, machines={self.num_machines}, "
            f"services={self.num_services})"
        )


def _check_subnet(net: Network, s: int) -> None:
    if not 0 <= s <= net.num_subnets:
        raise InvalidSubnetError(f"subnet {s} out of range 0..{net.num_subnets}")


def subnets_connected(net: Network, a: int, b: int) -> bool:
    _check_subnet(net, a)
    _check_subnet(net, b)
    return bool(net.topology[a, b])


def traffic_permitted(net: Network, src_subnet: int, dst_subnet: int, service: str) -> bool:
    """True if ``service`` traffic may flow from ``src_subnet`` into ``dst_subnet``.

    Traffic inside a subnet is never filtered.  A missing rule for an existing
    edge permits nothing.
    """
    if src_subnet == dst_subnet:
        _check_subnet(net, src_subnet)
        return True
    if not subnets_connected(net, src_subnet, dst_subnet):
        raise NoRouteError(f"no topology edge between subnets {src_subnet} and {dst_subnet}")
    return service in net.firewall.get((src_subnet, dst_subnet), ())


def validate(net: Network) -> list[str]:
    """Return human readable invariant violations; an empty list means valid."""
    problems: list[str] = []
    n = net.num_subnets
    adj = net.topology

    if any(size <= 0 for size in net.subnet_sizes):
        problems.append("subnet sizes must be positive")
    if not np.array_equal(adj, adj.T):
        problems.append("topology is not symmetric")
    if not adj.diagonal().all():
        problems.append("topology diagonal must be true")
    if n and not adj[0, 1:].any():
        problems.append("no subnet is connected to the external network")

    seen_ids: set[str] = set()
    for s in net.services:
        if s.id in seen_ids:
            problems.append(f"duplicate service id {s.id!r}")
        seen_ids.add(s.id)
        if not 0.0 <= s.exploit_prob <= 1.0:
            problems.append(f"service {s.id!r} exploit probability {s.exploit_prob} outside [0, 1]")
        if s.exploit_cost < 0:
            problems.append(f"service {s.id!r} has negative exploit cost")

    if sum(net.subnet_sizes) != net.num_machines:
        problems.append(
            f"subnet sizes sum to {sum(net.subnet_sizes)} but there are {net.num_machines} machines"
        )
    if len(set(net.addresses)) != len(net.addresses):
        problems.append("duplicate machine addresses")
    for m in net.machines:
        sub, idx = m.address
        if sub < 1 or sub > n:
            problems.append(f"machine {m.address} is in invalid subnet {sub}")
        elif not 0 <= idx < net.subnet_sizes[sub - 1]:
            problems.append(f"machine {m.address} id exceeds subnet size")
        missing = seen_ids.difference(m.config)
        if missing:
            problems.append(f"machine {m.address} config missing services {sorted(missing)}")
        unknown = set(m.config).difference(seen_ids)
        if unknown:
            problems.append(f"machine {m.address} config references unknown services {sorted(unknown)}")
        if m.value < 0:
            problems.append(f"machine {m.address} has negative value")

    for a in range(n + 1):
        for b in range(n + 1):
            if a != b and adj[a, b] and (a, b) not in net.firewall:
                problems.append(f"missing firewall rule for direction {a},{b}")
    for (a, b), allowed in sorted(net.firewall.items()):
        if not (0 <= a <= n and 0 <= b <= n) or a == b or not adj[a, b]:
            problems.append(f"firewall rule {a},{b} has no matching topology edge")
        unknown = allowed.difference(seen_ids)
        if unknown:
            problems.append(f"firewall rule {a},{b} references unknown services {sorted(unknown)}")

    if not problems:
        # deferred import: the oracle lives with scenario handling
        from .scenario import solvability_oracle

        result = solvability_oracle(net)
        if not net.sensitive_addresses:
            problems.append("network has no sensitive machines")
        elif not result.solvable:
            unreached = ", ".join(str(a) for a in result.unreachable)
            problems.append(f"no attack path to sensitive machine(s) {unreached}")
    return problems
