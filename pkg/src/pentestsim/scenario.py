"""Scenario documents, procedural generation and the solvability oracle."""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import yaml

from .network import Address, Machine, Network, Service, validate

REQUIRED_KEYS = (
    "subnets",
    "topology",
    "sensitive_machines",
    "service_exploits",
    "machine_configurations",
    "firewalls",
)

# attack complexity level -> exploit success probability
COMPLEXITY_PROBS = {"low": 0.2, "medium": 0.5, "high": 0.8}


class ScenarioError(ValueError):
    """Semantic problem in a scenario document; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class ScenarioParseError(ScenarioError):
    pass


class GeneratorError(ValueError):
    pass


# ---------------------------------------------------------------------------
# loading / emitting
# ---------------------------------------------------------------------------

def _pair(raw: Any, key: str) -> tuple[int, int]:
    if isinstance(raw, (list, tuple)):
        parts = list(raw)
    else:
        parts = str(raw).strip().strip("()[]").split(",")
    try:
        a, b = (int(str(p).strip()) for p in parts)
    except ValueError:
        raise ScenarioError(key, f"expected a 'a,b' pair, got {raw!r}") from None
    return a, b


def _fmt(pair: tuple[int, int]) -> str:
    return f"{pair[0]},{pair[1]}"


def load_scenario(document: str, check: bool = True) -> Network:
    """Parse a YAML scenario document into a :class:`Network`.

    With ``check`` (the default) the result must also pass :func:`validate`,
    which includes the existence of an attack path to every sensitive machine.
    """
    try:
        doc = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        raise ScenarioParseError("document", f"malformed YAML ({exc})") from None
    if not isinstance(doc, dict):
        raise ScenarioParseError("document", "top level must be a mapping")
    for key in REQUIRED_KEYS:
        if key not in doc:
            raise ScenarioError(key, "missing required key")
    if "services" not in doc and "num_services" not in doc:
        raise ScenarioError("services", "one of 'services' or 'num_services' is required")

    sizes = doc["subnets"]
    if not isinstance(sizes, list) or not sizes or not all(
        isinstance(n, int) and not isinstance(n, bool) and n > 0 for n in sizes
    ):
        raise ScenarioError("subnets", "must be a non-empty list of positive integers")
    n_sub = len(sizes)

    topo = doc["topology"]
    if (
        not isinstance(topo, list)
        or len(topo) != n_sub + 1
        or not all(isinstance(row, list) and len(row) == n_sub + 1 for row in topo)
    ):
        raise ScenarioError(
            "topology", f"must be a {n_sub + 1}x{n_sub + 1} matrix including the external network"
        )
    adj = np.array([[bool(v) for v in row] for row in topo], dtype=bool)
    for i in range(n_sub + 1):
        if not adj[i, i]:
            raise ScenarioError(f"topology[{i}][{i}]", "diagonal entries must be 1")
        for j in range(i + 1, n_sub + 1):
            if adj[i, j] != adj[j, i]:
                raise ScenarioError(f"topology[{i}][{j}]", "matrix is not symmetric")

    if "services" in doc:
        raw_ids = doc["services"]
        if not isinstance(raw_ids, list) or not raw_ids:
            raise ScenarioError("services", "must be a non-empty list of ids")
        service_ids = [str(s) for s in raw_ids]
    else:
        count = doc["num_services"]
        if not isinstance(count, int) or count < 1:
            raise ScenarioError("num_services", "must be a positive integer")
        service_ids = [str(i) for i in range(count)]
    if len(set(service_ids)) != len(service_ids):
        raise ScenarioError("services", "service ids must be unique")
    known = set(service_ids)

    exploits = doc["service_exploits"]
    if not isinstance(exploits, dict):
        raise ScenarioError("service_exploits", "must be a mapping")
    params: dict[str, tuple[float, float]] = {}
    for raw_id, spec in exploits.items():
        sid = str(raw_id)
        key = f"service_exploits[{sid}]"
        if sid not in known:
            raise ScenarioError(key, "unknown service")
        if isinstance(spec, dict):
            spec = [spec.get("probability", spec.get("prob")), spec.get("cost")]
        try:
            prob, cost = (float(v) for v in spec)
        except (TypeError, ValueError):
            raise ScenarioError(key, "expected [probability, cost]") from None
        if not 0.0 <= prob <= 1.0 or cost < 0:
            raise ScenarioError(key, "probability must be in [0, 1] and cost >= 0")
        params[sid] = (prob, cost)
    for sid in service_ids:
        if sid not in params:
            raise ScenarioError(f"service_exploits[{sid}]", "missing exploit definition")
    services = [Service(sid, params[sid][0], params[sid][1]) for sid in service_ids]

    addresses = [Address(s + 1, i) for s, size in enumerate(sizes) for i in range(size)]
    valid_addr = set(addresses)

    values: dict[Address, float] = {}
    sens = doc["sensitive_machines"]
    if not isinstance(sens, list):
        raise ScenarioError("sensitive_machines", "must be a list of [subnet, id, value]")
    for k, entry in enumerate(sens):
        key = f"sensitive_machines[{k}]"
        try:
            sub, idx, value = entry
            addr = Address(int(sub), int(idx))
            value = float(value)
        except (TypeError, ValueError):
            raise ScenarioError(key, "expected [subnet, id, value]") from None
        if addr not in valid_addr:
            raise ScenarioError(key, f"no machine at address {addr}")
        if value <= 0:
            raise ScenarioError(key, "sensitive machine value must be positive")
        values[addr] = value

    configs = doc["machine_configurations"]
    if not isinstance(configs, dict):
        raise ScenarioError("machine_configurations", "must be a mapping")
    running: dict[Address, set[str]] = {}
    for raw_addr, svc_list in configs.items():
        addr = Address(*_pair(raw_addr, f"machine_configurations[{raw_addr}]"))
        key = f"machine_configurations[{_fmt(addr)}]"
        if addr not in valid_addr:
            raise ScenarioError(key, "no machine at this address")
        ids = {str(s) for s in (svc_list or [])}
        if ids - known:
            raise ScenarioError(key, f"unknown services {sorted(ids - known)}")
        running[addr] = ids
    for addr in addresses:
        if addr not in running:
            raise ScenarioError(f"machine_configurations[{_fmt(addr)}]", "missing configuration")

    fw_doc = doc["firewalls"]
    if not isinstance(fw_doc, dict):
        raise ScenarioError("firewalls", "must be a mapping")
    firewall: dict[tuple[int, int], frozenset[str]] = {}
    for raw_pair, allowed in fw_doc.items():
        pair = _pair(raw_pair, f"firewalls[{raw_pair}]")
        key = f"firewalls[{_fmt(pair)}]"
        a, b = pair
        if not (0 <= a <= n_sub and 0 <= b <= n_sub) or a == b or not adj[a, b]:
            raise ScenarioError(key, "no topology edge between these subnets")
        ids = {str(s) for s in (allowed or [])}
        if ids - known:
            raise ScenarioError(key, f"unknown services {sorted(ids - known)}")
        firewall[pair] = frozenset(ids)
    for a in range(n_sub + 1):
        for b in range(n_sub + 1):
            if a != b and adj[a, b] and (a, b) not in firewall:
                raise ScenarioError(f"firewalls[{a},{b}]", "missing rule for this direction")

    machines = [
        Machine(addr, values.get(addr, 0.0), {sid: sid in running[addr] for sid in service_ids})
        for addr in addresses
    ]
    net = Network(sizes, adj, machines, services, firewall, scan_cost=float(doc.get("scan_cost", 1.0)))
    if check:
        problems = validate(net)
        if problems:
            raise ScenarioError("scenario", "; ".join(problems))
    return net


def _plain(x: float) -> int | float:
    return int(x) if float(x).is_integer() else float(x)


def dump_scenario(net: Network) -> str:
    """Serialise ``net`` to a document that :func:`load_scenario` reads back equal."""
    doc: dict[str, Any] = {
        "subnets": list(net.subnet_sizes),
        "topology": [[int(v) for v in row] for row in net.topology],
        "sensitive_machines": [
            [m.address.subnet, m.address.machine, _plain(m.value)] for m in net.machines if m.value > 0
        ],
        "services": list(net.service_ids),
        "service_exploits": {
            s.id: [float(s.exploit_prob), _plain(s.exploit_cost)] for s in net.services
        },
        "machine_configurations": {
            _fmt(m.address): [sid for sid in net.service_ids if m.config.get(sid)]
            for m in net.machines
        },
        "firewalls": {
            _fmt(pair): [sid for sid in net.service_ids if sid in allowed]
            for pair, allowed in sorted(net.firewall.items())
        },
    }
    if net.scan_cost != 1.0:
        doc["scan_cost"] = _plain(net.scan_cost)
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

class ExploitMode(enum.Enum):
    DETERMINISTIC = "deterministic"
    CVSS = "cvss"
    USER = "user"


@dataclass(frozen=True)
class GeneratorParams:
    num_machines: int
    num_services: int
    exploit_mode: ExploitMode = ExploitMode.CVSS
    restrictiveness: int = 5
    correlation_alpha: float = 1.0
    seed: int = 0
    exploit_probs: Sequence[float] | None = None
    # relative weights of low/medium/high attack complexity
    complexity_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    invert_complexity: bool = False
    sensitive_value: float = 10.0
    exploit_cost: float = 1.0
    scan_cost: float = 1.0
    service_presence: float = 0.5
    user_subnet_capacity: int = 5

    def __post_init__(self):
        mode = ExploitMode(self.exploit_mode)
        object.__setattr__(self, "exploit_mode", mode)
        if self.num_machines < 3:
            raise GeneratorError("num_machines must be at least 3 (DMZ, sensitive and one user machine)")
        if self.num_services < 1:
            raise GeneratorError("num_services must be at least 1")
        if self.restrictiveness < 1:
            raise GeneratorError("restrictiveness must be a positive integer")
        if not self.correlation_alpha > 0:
            raise GeneratorError("correlation_alpha must be positive")
        if not 0 < self.service_presence <= 1:
            raise GeneratorError("service_presence must be in (0, 1]")
        if mode is ExploitMode.USER:
            if self.exploit_probs is None or len(self.exploit_probs) != self.num_services:
                raise GeneratorError("user exploit mode needs one probability per service")
            if not all(0 <= p <= 1 for p in self.exploit_probs):
                raise GeneratorError("exploit probabilities must lie in [0, 1]")


def correlated_config_sampler(
    machine_index: int,
    pool: list[np.ndarray],
    alpha: float,
    rng: np.random.Generator,
    num_services: int | None = None,
    presence: float = 0.5,
) -> np.ndarray:
    """Draw one machine configuration, reusing earlier ones Chinese-restaurant style.

    ``pool`` holds the configuration of every machine drawn so far.  With
    probability ``k / (k + alpha)`` (``k = len(pool)``) a uniformly chosen
    earlier machine's configuration is copied, so popular configurations are
    picked in proportion to how many machines already use them.  Otherwise a
    fresh configuration is drawn, each service present independently with
    probability ``presence`` and redrawn until non-empty.  The result is
    appended to ``pool``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    k = len(pool)
    if num_services is None:
        if not pool:
            raise ValueError("num_services is required for the first draw")
        num_services = len(pool[0])
    if k and rng.random() < k / (k + alpha):
        cfg = pool[int(rng.integers(k))].copy()
    else:
        cfg = rng.random(num_services) < presence
        while not cfg.any():
            cfg = rng.random(num_services) < presence
    pool.append(cfg)
    return cfg.copy()


def user_tree_layout(num_user_machines: int, capacity: int = 5) -> tuple[list[int], list[int]]:
    """Sizes of breadth-first filled user subnets and each node's parent (-1 for root)."""
    n_nodes = math.ceil(num_user_machines / capacity)
    sizes = [capacity] * n_nodes
    sizes[-1] = num_user_machines - capacity * (n_nodes - 1)
    parents = [-1] + [(i - 1) // 2 for i in range(1, n_nodes)]
    return sizes, parents


def _sample_rule(
    rng: np.random.Generator, n_services: int, limit: int, required_from: np.ndarray
) -> set[int]:
    k = int(rng.integers(1, limit + 1))
    chosen: set[int] = set()
    candidates = np.flatnonzero(required_from)
    if candidates.size:
        chosen.add(int(rng.choice(candidates)))
    others = np.array([j for j in range(n_services) if j not in chosen], dtype=np.intp)
    extra = k - len(chosen)
    if extra > 0 and others.size:
        chosen.update(int(j) for j in rng.choice(others, size=min(extra, others.size), replace=False))
    return chosen


def generate_network(p: GeneratorParams) -> Network:
    """Build a standard DMZ / sensitive / user-tree network from ``p``.

    Subnet 1 is the DMZ and subnet 2 the sensitive subnet, one machine each.
    The remaining machines fill a breadth-first binary tree of user subnets
    starting at subnet 3.  The sensitive machines are ``(2, 0)`` and machine 0
    of the last user subnet, which is always a leaf.
    """
    rng = np.random.default_rng(p.seed)
    E = p.num_services
    user_sizes, parents = user_tree_layout(p.num_machines - 2, p.user_subnet_capacity)
    sizes = [1, 1] + user_sizes
    n_sub = len(sizes)
    root_user = 3

    adj = np.eye(n_sub + 1, dtype=bool)
    inter_zone = [(0, 1), (1, 2), (1, root_user), (2, root_user)]
    for a, b in inter_zone:
        adj[a, b] = adj[b, a] = True
    user_edges = []
    for i, parent in enumerate(parents):
        if parent >= 0:
            a, b = root_user + parent, root_user + i
            adj[a, b] = adj[b, a] = True
            user_edges.append((a, b))

    service_ids = [f"s{j}" for j in range(E)]
    addresses = [Address(s + 1, i) for s, size in enumerate(sizes) for i in range(size)]
    pool: list[np.ndarray] = []
    configs = [
        correlated_config_sampler(k, pool, p.correlation_alpha, rng, E, p.service_presence)
        for k in range(len(addresses))
    ]

    if p.exploit_mode is ExploitMode.DETERMINISTIC:
        probs = [1.0] * E
    elif p.exploit_mode is ExploitMode.USER:
        probs = [float(x) for x in p.exploit_probs]  # type: ignore[union-attr]
    else:
        levels = ["low", "medium", "high"]
        mapping = dict(COMPLEXITY_PROBS)
        if p.invert_complexity:
            mapping = {"low": 0.8, "medium": 0.5, "high": 0.2}
        w = np.asarray(p.complexity_weights, dtype=float)
        draws = rng.choice(3, size=E, p=w / w.sum())
        probs = [mapping[levels[int(d)]] for d in draws]
    services = [Service(sid, prob, p.exploit_cost) for sid, prob in zip(service_ids, probs)]

    starts = np.concatenate([[0], np.cumsum(sizes)])
    running_in = [np.zeros(E, dtype=bool)] + [
        np.logical_or.reduce(configs[starts[s]:starts[s + 1]]) for s in range(n_sub)
    ]
    limit = min(p.restrictiveness, E)
    firewall: dict[tuple[int, int], frozenset[str]] = {}
    for a, b in inter_zone:
        for src, dst in ((a, b), (b, a)):
            chosen = _sample_rule(rng, E, limit, running_in[dst])
            firewall[(src, dst)] = frozenset(service_ids[j] for j in sorted(chosen))
    everything = frozenset(service_ids)
    for a, b in user_edges:
        firewall[(a, b)] = everything
        firewall[(b, a)] = everything

    sensitive = {Address(2, 0), Address(n_sub, 0)}
    machines = [
        Machine(
            addr,
            p.sensitive_value if addr in sensitive else 0.0,
            {sid: bool(cfg[j]) for j, sid in enumerate(service_ids)},
        )
        for addr, cfg in zip(addresses, configs)
    ]
    return Network(sizes, adj, machines, services, firewall, scan_cost=p.scan_cost)


# ---------------------------------------------------------------------------
# solvability oracle
# ---------------------------------------------------------------------------

@dataclass
class SolvabilityResult:
    solvable: bool
    witness: list[tuple[Address, str]] = field(default_factory=list)
    min_exploit_cost: float = math.inf
    unreachable: list[Address] = field(default_factory=list)
    theoretical_max: float = 0.0

    @property
    def min_exploits(self) -> int:
        return len(self.witness)


def _attack_graph(net: Network):
    """Reverse adjacency of the compromise graph.

    Nodes ``0..M-1`` are machines and ``M + s`` stands for "subnet ``s`` has a
    foothold" (``M`` itself is the external network, always held).  A machine
    links to its subnet's hub at zero cost; a hub links to every machine it can
    exploit, at the cheapest usable exploit cost.
    """
    M = net.num_machines
    cost = np.array([s.exploit_cost for s in net.services], dtype=float)
    cfg = net.config_matrix
    preds: list[list[tuple[int, float, int]]] = [[] for _ in range(M + net.num_subnets + 1)]
    for m in range(M):
        preds[M + int(net.machine_subnet[m])].append((m, 0.0, -1))
    for m in range(M):
        t = int(net.machine_subnet[m])
        sources = [(t, cfg[m])]
        for src in net.neighbours[t]:
            mask = net.firewall_mask.get((src, t))
            if mask is not None:
                sources.append((src, cfg[m] & mask))
        for src, usable in sources:
            if usable.any():
                j = int(np.flatnonzero(usable)[np.argmin(cost[usable])])
                preds[m].append((M + src, float(cost[j]), j))
    return preds


def solvability_oracle(net: Network) -> SolvabilityResult:
    """Cheapest way to compromise the sensitive machines, if one exists.

    Runs the Dreyfus-Wagner Steiner-arborescence recursion rooted at the
    external network over the compromise graph, so the result is the exact
    minimum total exploit cost (with unit costs, the minimum exploit count)
    together with an executable exploit sequence as witness.
    """
    M = net.num_machines
    preds = _attack_graph(net)
    n_nodes = len(preds)
    root = M
    terms = [int(i) for i in net.sensitive_index]
    k = len(terms)
    if k == 0:
        return SolvabilityResult(solvable=False)

    full = (1 << k) - 1
    dp = np.full((full + 1, n_nodes), math.inf)
    # back[S][v]: ("edge", u, service) | ("split", S1) | ("base",)
    back: list[dict[int, tuple]] = [dict() for _ in range(full + 1)]

    for S in range(1, full + 1):
        row = dp[S]
        if S & (S - 1) == 0:
            t = terms[S.bit_length() - 1]
            row[t] = 0.0
            back[S][t] = ("base",)
        else:
            low = S & -S
            rest = S ^ low
            sub = rest
            while True:
                S1 = sub | low
                if S1 != S:
                    cand = dp[S1] + dp[S ^ S1]
                    better = cand < row
                    if better.any():
                        for v in np.flatnonzero(better):
                            back[S][int(v)] = ("split", S1)
                        np.minimum(row, cand, out=row)
                if sub == 0:
                    break
                sub = (sub - 1) & rest
        heap = [(float(row[v]), v) for v in np.flatnonzero(np.isfinite(row))]
        heapq.heapify(heap)
        while heap:
            d, u = heapq.heappop(heap)
            if d > row[u]:
                continue
            # relax every v with an edge v -> u
            for v, w, j in preds[u]:
                nd = d + w
                if nd < row[v]:
                    row[v] = nd
                    back[S][v] = ("edge", u, j)
                    heapq.heappush(heap, (nd, v))

    unreachable = [net.addresses[t] for i, t in enumerate(terms) if not math.isfinite(dp[1 << i][root])]
    best = -math.inf
    values = net.values
    for S in range(1, full + 1):
        if math.isfinite(dp[S][root]):
            gain = sum(values[terms[i]] for i in range(k) if S >> i & 1)
            best = max(best, gain - dp[S][root])
    theoretical_max = float(best) if math.isfinite(best) else 0.0

    if not math.isfinite(dp[full][root]):
        return SolvabilityResult(False, [], math.inf, unreachable, theoretical_max)

    edges: list[tuple[int, int, int]] = []
    stack = [(full, root)]
    while stack:
        S, v = stack.pop()
        how = back[S][v]
        if how[0] == "edge":
            _, u, j = how
            edges.append((v, u, j))
            stack.append((S, u))
        elif how[0] == "split":
            stack.append((how[1], v))
            stack.append((S ^ how[1], v))

    children: dict[int, list[tuple[int, int]]] = {}
    for v, u, j in edges:
        children.setdefault(v, []).append((u, j))
    witness: list[tuple[Address, str]] = []
    seen: set[int] = set()
    order = [root]
    while order:
        v = order.pop(0)
        for u, j in sorted(children.get(v, [])):
            if u < M and u not in seen:
                seen.add(u)
                witness.append((net.addresses[u], net.service_ids[j]))
            order.append(u)
    return SolvabilityResult(True, witness, float(dp[full][root]), [], theoretical_max)


def theoretical_max_reward(net: Network) -> float:
    return solvability_oracle(net).theoretical_max

