"""Experiment driver: build a scenario, train an agent for a wall-clock budget,
evaluate it, run scaling sweeps and throughput benchmarks, and write the
results as CSV / JSON / DOT.

Every random stream is derived from the experiment seed, so re-running with
the same seed (and an episode cap, since a pure time budget makes the number
of episodes hardware-dependent) reproduces the logs exactly apart from the
wall-clock column.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import random
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .agents import (
    AGENT_KINDS,
    DQLHyperparams,
    DQLPolicy,
    EvalResult,
    Policy,
    QNetwork,
    QTable,
    TabularHyperparams,
    UniformPolicy,
    greedy_policy_eval,
    smoothed_returns,
    train_dql,
    train_random,
    train_tabular,
)
from .agents.common import EpisodeRecord
from .env import action_space, reset, step
from .network import Network
from .scenario import ExploitMode, GeneratorParams, dump_scenario, generate_network, load_scenario, solvability_oracle

TRAINING_FIELDS = ["episode", "steps", "return", "cum_steps", "wall_clock_s"]
EVAL_FIELDS = ["run", "steps", "return", "solved"]
SWEEP_FIELDS = ["x_value", "seed", "solved_prop", "mean_reward", "stderr"]
SWEEP_EVAL_FIELDS = ["x_value", "seed", "run", "steps", "return", "solved"]
BENCH_FIELDS = ["machines", "services", "load_s_mean", "load_s_sd", "actions_per_s_mean", "actions_per_s_sd"]

MACHINE_SWEEP = list(range(3, 44, 5))
SERVICE_SWEEP = list(range(1, 52, 5))
SWEEP_FIXED_SERVICES = 5
SWEEP_FIXED_MACHINES = 18

FIXTURES = ("standard", "single-site", "multi-site")


def fixture_path(name: str) -> Path:
    """Path of a shipped 16-machine scenario (``standard``, ``single-site``, ``multi-site``)."""
    if name not in FIXTURES:
        raise ValueError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    return Path(str(resources.files("pentestsim") / "scenarios" / f"{name}.yaml"))


def resolve_scenario(ref: str) -> Path:
    """Accept either a file path or the name of a shipped fixture."""
    p = Path(ref)
    if p.exists() or ref not in FIXTURES:
        return p
    return fixture_path(ref)


# ---------------------------------------------------------------------------
# experiment specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    agent: str = "tabular-eps"
    scenario: str | None = None
    machines: int | None = None
    services: int | None = None
    exploit_mode: str = "cvss"
    budget: float = 120.0
    seeds: tuple[int, ...] = (0,)
    eval_runs: int = 30
    eval_eps: float = 0.05
    max_steps: int = 500
    max_episodes: int | None = None
    overrides: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self):
        if self.agent not in AGENT_KINDS:
            raise ValueError(f"unknown agent {self.agent!r}; choose from {', '.join(AGENT_KINDS)}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if not self.budget > 0:
            raise ValueError("budget must be positive")
        if self.scenario is None and (self.machines is None or self.services is None):
            raise ValueError("give either a scenario file or both machines and services")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.eval_runs < 0:
            raise ValueError("eval_runs must be non-negative")

    def hyperparams(self):
        if self.agent == "random":
            if self.overrides:
                raise ValueError("the random agent has no hyperparameters")
            return None
        base = DQLHyperparams() if self.agent == "dql" else TabularHyperparams()
        return apply_overrides(base, dict(self.overrides))


def apply_overrides(h, overrides: dict[str, Any]):
    """``dataclasses.replace`` with string values coerced to each field's type."""
    if not overrides:
        return h
    names = {f.name: f for f in dataclasses.fields(h)}
    changes = {}
    for key, raw in overrides.items():
        if key not in names:
            raise ValueError(f"unknown hyperparameter {key!r} for {type(h).__name__}")
        current = getattr(h, key)
        if isinstance(raw, str):
            if raw.lower() == "none":
                value = None
            elif isinstance(current, bool):
                value = raw.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                value = int(raw)
            else:
                value = float(raw)
        else:
            value = raw
        changes[key] = value
    return dataclasses.replace(h, **changes)


def parse_overrides(items: Sequence[str]) -> tuple[tuple[str, str], ...]:
    out = []
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ValueError(f"hyperparameter override must look like name=value, got {item!r}")
        out.append((key.strip(), value.strip()))
    return tuple(out)


def build_network(spec: ExperimentSpec, seed: int) -> Network:
    if spec.scenario is not None:
        return load_scenario(resolve_scenario(spec.scenario).read_text())
    return generate_network(
        GeneratorParams(spec.machines, spec.services, exploit_mode=ExploitMode(spec.exploit_mode), seed=seed)
    )


def substream(seed: int, purpose: str) -> random.Random:
    """Independent, reproducible stream for one purpose (training, evaluation, ...)."""
    return random.Random(f"{purpose}:{seed}")


def np_substream(seed: int, purpose: str) -> np.random.Generator:
    return np.random.default_rng(substream(seed, purpose).getrandbits(64))


# ---------------------------------------------------------------------------
# training and evaluation
# ---------------------------------------------------------------------------

@dataclass
class TrainOutcome:
    agent: str
    policy: Policy
    log: list[EpisodeRecord]
    checkpoint: QTable | QNetwork | None = None


def train_agent(net: Network, spec: ExperimentSpec, seed: int) -> TrainOutcome:
    h = spec.hyperparams()
    kw = dict(budget=spec.budget, max_steps=spec.max_steps, max_episodes=spec.max_episodes)
    if spec.agent == "random":
        res = train_random(net, rng=substream(seed, "train"), **kw)
        return TrainOutcome("random", res.policy, res.log, None)
    if spec.agent == "dql":
        res = train_dql(net, h, rng=np_substream(seed, "train"), **kw)
        return TrainOutcome("dql", res.policy, res.log, res.qnet)
    res = train_tabular(net, spec.agent, h, rng=substream(seed, "train"), **kw)
    return TrainOutcome(spec.agent, res.qtable, res.log, res.qtable)


def evaluate(net: Network, policy: Policy, spec: ExperimentSpec, seed: int, agent: str | None = None) -> EvalResult:
    # the random baseline ignores its policy entirely
    eps = 1.0 if (agent or spec.agent) == "random" else spec.eval_eps
    return greedy_policy_eval(net, policy, eps=eps, runs=spec.eval_runs, max_steps=spec.max_steps,
                              rng=substream(seed, "eval"))


def load_checkpoint(path: str | Path) -> Policy:
    """Policy from a saved Q-table or Q-network (``.npz``)."""
    with np.load(path) as data:
        kind = str(data["kind"]) if "kind" in data.files else ""
    if kind == "qtable":
        return QTable.load(path)
    if kind == "qnetwork":
        return DQLPolicy(QNetwork.load(path))
    raise ValueError(f"{path} is not a recognised checkpoint")


@dataclass
class ExperimentRecord:
    machines: int
    services: int
    seed: int
    agent: str
    theoretical_max: float
    min_exploits: int
    log: list[EpisodeRecord] = field(default_factory=list)
    evaluation: EvalResult | None = None

    @property
    def smoothed_return(self) -> float | None:
        if not self.log:
            return None
        return float(smoothed_returns([r.ret for r in self.log], 100)[-1])

    def metadata(self, spec: ExperimentSpec) -> dict:
        return {
            "agent": self.agent,
            "scenario": spec.scenario,
            "machines": self.machines,
            "services": self.services,
            "seed": self.seed,
            "exploit_mode": spec.exploit_mode if spec.scenario is None else None,
            "theoretical_max": self.theoretical_max,
            "min_exploits": self.min_exploits,
            "budget_secs": spec.budget,
            "max_steps": spec.max_steps,
            "max_episodes": spec.max_episodes,
            "hyperparams": _asdict_or_none(spec.hyperparams()),
            "episodes": len(self.log),
            "total_steps": self.log[-1].cum_steps if self.log else 0,
            "smoothed_return_last100": self.smoothed_return,
            "evaluation": self.evaluation.summary() if self.evaluation else None,
            "eval_eps": 1.0 if self.agent == "random" else spec.eval_eps,
        }


def _asdict_or_none(h):
    return dataclasses.asdict(h) if h is not None else None


def run_train(spec: ExperimentSpec, seed: int, out: Path | None = None) -> ExperimentRecord:
    """Train one agent on one scenario instance, evaluate it, and persist everything."""
    net = build_network(spec, seed)
    oracle = solvability_oracle(net)
    outcome = train_agent(net, spec, seed)
    ev = evaluate(net, outcome.policy, spec, seed) if spec.eval_runs else None
    rec = ExperimentRecord(net.num_machines, net.num_services, seed, spec.agent,
                           oracle.theoretical_max, oracle.min_exploits, outcome.log, ev)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "training.csv", TRAINING_FIELDS, (r.row() for r in outcome.log))
        if ev is not None:
            write_csv(out / "eval.csv", EVAL_FIELDS, (r.row() for r in ev.runs))
        if outcome.checkpoint is not None:
            outcome.checkpoint.save(out / "checkpoint.npz")
        write_json(out / "metadata.json", rec.metadata(spec))
    return rec


def run_eval(spec: ExperimentSpec, seed: int, checkpoint: str | Path | None, out: Path | None = None) -> EvalResult:
    net = build_network(spec, seed)
    if checkpoint is None:
        if spec.agent != "random":
            raise ValueError("evaluating a learning agent needs --checkpoint")
        policy: Policy = UniformPolicy()
    else:
        policy = load_checkpoint(checkpoint)
    ev = evaluate(net, policy, spec, seed)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "eval.csv", EVAL_FIELDS, (r.row() for r in ev.runs))
        oracle = solvability_oracle(net)
        write_json(out / "eval_summary.json", {
            "agent": spec.agent, "machines": net.num_machines, "services": net.num_services,
            "seed": seed, "theoretical_max": oracle.theoretical_max,
            "eval_eps": 1.0 if spec.agent == "random" else spec.eval_eps, **ev.summary(),
        })
    return ev


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def sweep_grid(kind: str) -> tuple[list[int], int]:
    """Grid of swept values and the value held fixed for the other dimension."""
    if kind == "machines":
        return list(MACHINE_SWEEP), SWEEP_FIXED_SERVICES
    if kind == "services":
        return list(SERVICE_SWEEP), SWEEP_FIXED_MACHINES
    raise ValueError("sweep kind must be 'machines' or 'services'")


def _sweep_cell(args) -> tuple[dict, list[dict]]:
    kind, x, seed, spec = args
    if kind == "machines":
        cell = dataclasses.replace(spec, machines=x, seeds=(seed,))
    else:
        cell = dataclasses.replace(spec, services=x, seeds=(seed,))
    rec = run_train(cell, seed)
    ev = rec.evaluation
    summary = {
        "x_value": x,
        "seed": seed,
        "solved_prop": ev.solved_prop,
        "mean_reward": ev.mean_return,
        "stderr": ev.stderr,
    }
    runs = [{"x_value": x, "seed": seed, **r.row()} for r in ev.runs]
    return summary, runs


def run_sweep(
    kind: str,
    spec: ExperimentSpec,
    grid: Sequence[int] | None = None,
    out: Path | None = None,
    workers: int = 1,
) -> tuple[list[dict], list[dict]]:
    """Train and evaluate on ``len(spec.seeds)`` generated networks per grid point.

    Returns (per-seed summary rows, per-run evaluation rows), both sorted by
    (x_value, seed[, run]) regardless of worker completion order.
    """
    default_grid, fixed = sweep_grid(kind)
    grid = list(grid) if grid is not None else default_grid
    if spec.eval_runs < 1:
        raise ValueError("a sweep needs at least one evaluation run")
    if kind == "machines":
        base = dataclasses.replace(spec, scenario=None, services=spec.services or fixed, machines=grid[0])
    else:
        base = dataclasses.replace(spec, scenario=None, machines=spec.machines or fixed, services=grid[0])
    cells = [(kind, x, seed, base) for x in grid for seed in spec.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]
    rows = sorted((r[0] for r in results), key=lambda r: (r["x_value"], r["seed"]))
    runs = sorted((row for r in results for row in r[1]), key=lambda r: (r["x_value"], r["seed"], r["run"]))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / f"sweep_{kind}.csv", SWEEP_FIELDS, rows)
        write_csv(out / f"sweep_{kind}_eval.csv", SWEEP_EVAL_FIELDS, runs)
        write_json(out / f"sweep_{kind}.json", {
            "kind": kind, "grid": grid, "fixed": base.services if kind == "machines" else base.machines,
            "agent": spec.agent, "seeds": list(spec.seeds), "eval_runs": spec.eval_runs,
            "budget_secs": spec.budget, "points": sweep_summary(rows),
        })
    return rows, runs


def sweep_summary(rows: Sequence[dict]) -> list[dict]:
    """Mean over seeds at each grid point, with the standard error across seeds."""
    from .agents.common import standard_error

    out = []
    for x in sorted({r["x_value"] for r in rows}):
        cell = [r for r in rows if r["x_value"] == x]
        solved = [r["solved_prop"] for r in cell]
        reward = [r["mean_reward"] for r in cell]
        out.append({
            "x_value": x,
            "solved_prop": float(np.mean(solved)),
            "solved_stderr": standard_error(solved),
            "mean_reward": float(np.mean(reward)),
            "reward_stderr": standard_error(reward),
        })
    return out


# ---------------------------------------------------------------------------
# throughput benchmark
# ---------------------------------------------------------------------------

def measure_load(machines: int, services: int, seed: int, clock=time.perf_counter) -> float:
    """Seconds to generate a network and build its action tables."""
    t0 = clock()
    net = generate_network(GeneratorParams(machines, services, seed=seed))
    reset(net)
    return clock() - t0


def measure_actions_per_second(net: Network, n_actions: int = 10_000, seed: int = 0, clock=time.perf_counter) -> float:
    """Step through the action space in order, resetting whenever the goal is reached."""
    actions = len(action_space(net))
    rng = random.Random(seed)
    s = reset(net)
    t0 = clock()
    for i in range(n_actions):
        s, _, done = step(net, s, i % actions, rng)
        if done:
            s = reset(net)
    return n_actions / (clock() - t0)


def run_bench(
    sizes: Sequence[tuple[int, int]],
    repeats: int = 10,
    n_actions: int = 10_000,
    out: Path | None = None,
    measure_throughput: bool = True,
) -> list[dict]:
    rows = []
    for machines, services in sizes:
        loads = [measure_load(machines, services, seed) for seed in range(repeats)]
        row = {
            "machines": machines,
            "services": services,
            "load_s_mean": statistics.fmean(loads),
            "load_s_sd": statistics.stdev(loads) if repeats > 1 else 0.0,
            "actions_per_s_mean": None,
            "actions_per_s_sd": None,
        }
        if measure_throughput:
            rates = []
            for seed in range(repeats):
                net = generate_network(GeneratorParams(machines, services, seed=seed))
                rates.append(measure_actions_per_second(net, n_actions, seed))
            row["actions_per_s_mean"] = statistics.fmean(rates)
            row["actions_per_s_sd"] = statistics.stdev(rates) if repeats > 1 else 0.0
        rows.append(row)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "bench.csv", BENCH_FIELDS, rows)
    return rows


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

def record_episode(net: Network, policy: Policy, eps: float, max_steps: int, rng: random.Random):
    """Play one episode and return it as ``(state after, action, reward)`` steps."""
    from .agents.common import uniform_index

    actions = action_space(net)
    s = reset(net)
    episode = []
    for _ in range(max_steps):
        a = uniform_index(rng, len(actions)) if rng.random() < eps else policy.greedy_action(s)
        s, r, done = step(net, s, a, rng)
        episode.append((s, actions[a], r))
        if done:
            break
    return episode


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def write_csv(path: Path, fields: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row[k] is None else row[k]) for k in fields})


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_scenario(net: Network, path: Path | None) -> str:
    doc = dump_scenario(net)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(doc)
    return doc
