"""Text renderings of a network and of an attack episode.

Episodes come out as a list of per-step records (also written as JSON lines
by the harness) and the network as a Graphviz DOT graph, one cluster per
subnet.  Node colours: black for compromised machines, pink for sensitive
machines not yet compromised, blue for other reachable machines and red for
machines the attacker cannot reach.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .env import COMPROMISED, KNOWLEDGE, REACHABLE, Action, State, is_done, reset
from .network import Network

COLOURS = {
    "compromised": "black",
    "sensitive": "pink",
    "reachable": "lightblue",
    "unreachable": "red",
}


@dataclass
class TraceRecord:
    t: int
    action_target: str
    action_kind: str
    service: str | None
    reward: float
    done: bool
    newly_compromised: list[str] = field(default_factory=list)
    newly_reachable: list[str] = field(default_factory=list)
    newly_scanned: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False)


@dataclass
class Trace:
    records: list[TraceRecord]
    dot: str

    @property
    def total_reward(self) -> float:
        return float(sum(r.reward for r in self.records))

    def jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)


def _fmt_addr(a) -> str:
    return f"{a[0]},{a[1]}"


def machine_status(net: Network, s: State) -> list[str]:
    grid = s.grid
    out = []
    for i, m in enumerate(net.machines):
        if grid[i, COMPROMISED]:
            out.append("compromised")
        elif m.value > 0:
            out.append("sensitive")
        elif grid[i, REACHABLE]:
            out.append("reachable")
        else:
            out.append("unreachable")
    return out


def network_dot(net: Network, s: State | None = None, name: str = "network") -> str:
    """DOT graph of ``net``, coloured by the attacker's view in ``s``."""
    if s is None:
        s = reset(net)
    status = machine_status(net, s)
    lines = [f"graph {name} {{", "  node [style=filled];", '  internet [label="external", shape=box, fillcolor=white];']
    for sub in range(1, net.num_subnets + 1):
        lines.append(f"  subgraph cluster_{sub} {{")
        lines.append(f'    label="subnet {sub}";')
        sl = net.subnet_slice(sub)
        members = net.addresses[sl]
        for i, addr in zip(range(sl.start, sl.stop), members):
            colour = COLOURS[status[i]]
            font = ' fontcolor=white' if status[i] == "compromised" else ""
            lines.append(f'    m{addr.subnet}_{addr.machine} [label="{addr.subnet},{addr.machine}", fillcolor={colour}{font}];')
        for a, b in zip(members, members[1:]):
            lines.append(f"    m{a.subnet}_{a.machine} -- m{b.subnet}_{b.machine};")
        lines.append("  }")
    for a in range(net.num_subnets + 1):
        for b in range(a + 1, net.num_subnets + 1):
            if net.topology[a, b]:
                src = "internet" if a == 0 else f"m{a}_0"
                lines.append(f'  {src} -- m{b}_0 [style=dashed];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def render_trace(
    net: Network, episode: Sequence[tuple[State, Action, float]], start: State | None = None
) -> Trace:
    """Render an episode given as ``(state after action, action, reward)`` steps.

    ``start`` defaults to the reset state.  The DOT graph shows the final state.
    """
    if not episode:
        raise ValueError("episode must contain at least one step")
    prev = start if start is not None else reset(net)
    records = []
    for t, (state, action, reward) in enumerate(episode):
        before, after = prev.grid, state.grid
        comp = np.flatnonzero((after[:, COMPROMISED] == 1) & (before[:, COMPROMISED] == 0))
        reach = np.flatnonzero((after[:, REACHABLE] == 1) & (before[:, REACHABLE] == 0))
        scanned = np.flatnonzero(
            (after[:, KNOWLEDGE:] != before[:, KNOWLEDGE:]).any(axis=1)
            & (after[:, COMPROMISED] == before[:, COMPROMISED])
        )
        records.append(
            TraceRecord(
                t=t,
                action_target=_fmt_addr(action.target),
                action_kind=action.kind.value,
                service=action.service,
                reward=float(reward),
                done=is_done(net, state),
                newly_compromised=[_fmt_addr(net.addresses[i]) for i in comp],
                newly_reachable=[_fmt_addr(net.addresses[i]) for i in reach],
                newly_scanned=[_fmt_addr(net.addresses[i]) for i in scanned],
            )
        )
        prev = state
    return Trace(records, network_dot(net, prev, name="episode"))


def write_trace(trace: Trace, jsonl_path, dot_path) -> None:
    with open(jsonl_path, "w") as fh:
        fh.write(trace.jsonl())
    with open(dot_path, "w") as fh:
        fh.write(trace.dot)


def iter_records(lines: Iterable[str]) -> list[dict]:
    return [json.loads(line) for line in lines if line.strip()]
