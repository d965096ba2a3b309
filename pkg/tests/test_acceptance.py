"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` or directly as
``python3 tests/test_acceptance.py``.  The learning criteria train for tens of
seconds each; the whole module takes about four minutes.
"""

from __future__ import annotations

import itertools
import random
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from pentestsim import harness
from pentestsim.agents import greedy_policy_eval, smoothed_returns, train_dql, train_tabular
from pentestsim.agents.common import UniformPolicy
from pentestsim.agents.deep import QNetwork, loss_and_grads
from pentestsim.cli import main as cli_main
from pentestsim.env import COMPROMISED, action_space, reset, state_space_size_bound, step
from pentestsim.network import validate
from pentestsim.scenario import ExploitMode, GeneratorParams, generate_network, load_scenario, solvability_oracle

from conftest import THREE_MACHINE_DOC, bare_network, two_machine_variants
from oracles import enumerate_state_grids, ref_matches, ref_reset, ref_step, relative_error

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nAC{number} {'PASS' if ok else 'FAIL'}: {detail}")

    return emit


def small_deterministic_network(seed: int = 0):
    return generate_network(GeneratorParams(8, 3, exploit_mode=ExploitMode.DETERMINISTIC, seed=seed))


# 1 ---------------------------------------------------------------------------

def test_ac1_transition_oracle_equivalence(report):
    base = next(two_machine_variants())
    assert (base.num_subnets, base.num_machines, base.num_services) == (2, 2, 1)
    t0 = time.perf_counter()
    checked = mismatches = 0
    n = len(action_space(base))
    for length in range(1, 5):
        for seq in itertools.product(range(n), repeat=length):
            s, ref = reset(base), ref_reset(base)
            for k in seq:
                s, r, done = step(base, s, k, random.Random(0))
                ref, r_ref, done_ref = ref_step(base, ref, action_space(base)[k], 0.0)
                checked += 1
                mismatches += not (ref_matches(base, ref, s) and r == r_ref and done == done_ref)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 1.0
    report(1, ok, f"{checked} transitions over all sequences of length <= 4, "
                  f"{mismatches} mismatches, {elapsed:.3f} s (limit 1 s)")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_ac2_reward_identity(report):
    t0 = time.perf_counter()
    steps = violations = over_max = 0
    rng = random.Random(2)
    seed = 0
    while steps < 10_000:
        net = generate_network(GeneratorParams(rng.randint(3, 20), rng.randint(1, 6), seed=seed))
        seed += 1
        tmax = solvability_oracle(net).theoretical_max
        values = np.array([m.value for m in net.machines])
        actions = action_space(net)
        s, ret = reset(net), 0.0
        for _ in range(500):
            k = rng.randrange(len(actions))
            s_next, r, done = step(net, s, k, rng)
            newly = (s_next.grid[:, COMPROMISED] == 1) & (s.grid[:, COMPROMISED] == 0)
            violations += r != float(values[newly].sum()) - actions[k].cost
            ret += r
            over_max += ret > tmax
            steps += 1
            s = s_next
            if done:
                break
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and over_max == 0 and elapsed < 30
    report(2, ok, f"{steps} random steps on {seed} generated networks: {violations} reward mismatches, "
                  f"{over_max} returns above the theoretical max, {elapsed:.1f} s (limit 30 s)")
    assert ok


# 3 ---------------------------------------------------------------------------

def test_ac3_state_space_counting(report):
    expected = {(1, 1): 12, (2, 1): 144, (1, 2): 36}
    got = {}
    for (m, e), want in expected.items():
        bound = state_space_size_bound(bare_network(m, e))
        brute = sum(1 for _ in enumerate_state_grids(m, e))
        got[(m, e)] = (bound, brute)
    ok = all(b == br == expected[k] for k, (b, br) in got.items())
    report(3, ok, ", ".join(f"{k}: bound {b} / enumerated {br}" for k, (b, br) in got.items()))
    assert ok


# 4 ---------------------------------------------------------------------------

def test_ac4_generator_solvability(report):
    t0 = time.perf_counter()
    failures = []
    sizes = list(itertools.product(range(3, 44, 2), range(1, 52, 5)))
    rng = random.Random(4)
    picked = rng.sample(sizes, 100)
    for i, (m, e) in enumerate(picked):
        net = generate_network(GeneratorParams(m, e, seed=i))
        problems = validate(net)
        res = solvability_oracle(net)
        if problems or not res.solvable:
            failures.append((m, e, i))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 60
    report(4, ok, f"100 networks with M in [{min(p[0] for p in picked)}, {max(p[0] for p in picked)}], "
                  f"E in [{min(p[1] for p in picked)}, {max(p[1] for p in picked)}]: "
                  f"{len(failures)} failures, {elapsed:.1f} s (limit 60 s)")
    assert ok


# 5 ---------------------------------------------------------------------------

def test_ac5_tabular_convergence(report):
    net = small_deterministic_network()
    tmax = solvability_oracle(net).theoretical_max
    budget = 60.0
    res = train_tabular(net, "tabular-eps", budget=budget, rng=random.Random(5))
    smooth = smoothed_returns([r.ret for r in res.log], 100)
    hit = next((i for i, v in enumerate(smooth) if v >= tmax - 1.0), None)
    ev = greedy_policy_eval(net, res.qtable, eps=0.05, runs=30, rng=random.Random(50))
    ok = (hit is not None and res.log[hit].wall_clock_s <= budget
          and ev.solved_prop >= 0.9 and abs(ev.max_return - tmax) <= 1.0)
    when = f"after {res.log[hit].wall_clock_s:.1f} s (episode {hit})" if hit is not None else "never"
    report(5, ok, f"M=8 E=3 deterministic, theoretical max {tmax:g}: last-100 mean reached "
                  f"{tmax - 1:g} {when}, final {smooth[-1]:.2f}; eval solved {ev.solved_prop:.2f}, "
                  f"max {ev.max_return:g}")
    assert ok


# 6 ---------------------------------------------------------------------------

def test_ac6_ucb_parity(report):
    net = small_deterministic_network()
    tmax = solvability_oracle(net).theoretical_max
    res = train_tabular(net, "tabular-ucb", budget=60.0, rng=random.Random(6))
    ev = greedy_policy_eval(net, res.qtable, eps=0.05, runs=30, rng=random.Random(60))
    elapsed = res.log[-1].wall_clock_s
    ok = ev.solved_prop >= 0.9 and elapsed <= 120
    report(6, ok, f"UCB on the same network trained {elapsed:.1f} s (limit 120 s): solved "
                  f"{ev.solved_prop:.2f}, max {ev.max_return:g} of {tmax:g}")
    assert ok


# 7 ---------------------------------------------------------------------------

def test_ac7_dql_learns(report):
    net = load_scenario(THREE_MACHINE_DOC)
    assert (net.num_subnets, net.num_machines, net.num_services) == (2, 3, 2)
    tmax = solvability_oracle(net).theoretical_max

    syncs = []

    def on_sync(t, q, target):
        syncs.append((t, all(np.array_equal(a, b) for a, b in zip(q.params, target.params))))

    res = train_dql(net, budget=60.0, rng=7, on_sync=on_sync)
    greedy = greedy_policy_eval(net, res.policy, eps=0.0, runs=1, rng=random.Random(70))
    total = res.log[-1].cum_steps
    sync_ok = [t for t, _ in syncs] == list(range(1000, total + 1, 1000)) and all(eq for _, eq in syncs)

    rng = np.random.default_rng(7)
    tiny = QNetwork.init(6, 3, 4, rng, dtype=np.float64)
    tiny.b1[:] = rng.normal(0, 0.5, 4)
    x, a, y = rng.normal(size=(8, 6)), rng.integers(0, 3, 8), rng.normal(size=8)
    _, grads = loss_and_grads(tiny, x, a, y)
    worst = 0.0
    for p, g in zip(tiny.params, grads):
        numeric = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + 1e-6
            up, _ = loss_and_grads(tiny, x, a, y)
            p[i] = old - 1e-6
            down, _ = loss_and_grads(tiny, x, a, y)
            p[i] = old
            numeric[i] = (up - down) / 2e-6
        worst = max(worst, relative_error(g, numeric))

    ok = greedy.max_return == tmax and worst < 1e-4 and sync_ok
    report(7, ok, f"greedy return {greedy.max_return:g} of {tmax:g} after {res.log[-1].wall_clock_s:.1f} s "
                  f"(limit 300 s); gradient rel. error {worst:.1e}; {len(syncs)} target syncs, "
                  f"bit-equal: {sync_ok}")
    assert ok


# 8 ---------------------------------------------------------------------------

def test_ac8_random_baseline_sign(report):
    net = load_scenario(harness.fixture_path("standard").read_text())
    rand = greedy_policy_eval(net, UniformPolicy(), eps=1.0, runs=30, rng=random.Random(8))
    trained = {}
    for kind in ("tabular-eps", "tabular-ucb"):
        res = train_tabular(net, kind, budget=30.0, rng=random.Random(80))
        trained[kind] = greedy_policy_eval(net, res.qtable, eps=0.05, runs=30, rng=random.Random(81)).max_return
    ok = rand.max_return < 0 and all(v > 0 for v in trained.values())
    report(8, ok, f"standard fixture: random max {rand.max_return:g}; trained max "
                  + ", ".join(f"{k} {v:g}" for k, v in trained.items()))
    assert ok


# 9 ---------------------------------------------------------------------------

def test_ac9_throughput(report):
    rows = harness.run_bench([(40, 10), (480, 10)], repeats=10, n_actions=10_000)
    rate = {(r["machines"], r["services"]): r["actions_per_s_mean"] for r in rows}
    load = harness.measure_load(1000, 1000, seed=0)
    ok = rate[(40, 10)] >= 10_000 and rate[(480, 10)] >= 1_000 and load < 10
    report(9, ok, f"{rate[(40, 10)]:,.0f} actions/s at 40x10 (need 10,000), {rate[(480, 10)]:,.0f} at "
                  f"480x10 (need 1,000); 1000x1000 load {load:.2f} s (limit 10 s)")
    assert ok


# 10 --------------------------------------------------------------------------

def _cli(*argv) -> None:
    assert cli_main([str(a) for a in argv]) == 0


def _without_wall_clock(path: Path) -> list[dict]:
    return [{k: v for k, v in row.items() if k != "wall_clock_s"} for row in harness.read_csv(path)]


def _run_all_commands(root: Path, toy: Path) -> None:
    _cli("generate", "--machines", 12, "--services", 4, "--seed", 3, "--out", root / "gen.yaml")
    for agent in ("tabular-eps", "tabular-ucb", "dql", "random"):
        _cli("train", "--scenario", toy, "--agent", agent, "--seed", 1, "--max-episodes", 60,
             "--budget-secs", 60, "--out", root / agent)
    _cli("train", "--machines", 8, "--services", 3, "--seed", 2, "--max-episodes", 200,
         "--budget-secs", 60, "--out", root / "generated")
    _cli("eval", "--scenario", toy, "--checkpoint", root / "dql/checkpoint.npz", "--agent", "dql",
         "--seed", 1, "--out", root / "eval")
    _cli("sweep", "machines", "--grid", 3, 8, "--seeds", 0, 1, "--eval-runs", 3, "--max-episodes", 20,
         "--budget-secs", 60, "--workers", 2, "--out", root / "sweep")
    _cli("trace", "--scenario", toy, "--seed", 1, "--out", root / "trace")


def test_ac10_determinism(report, tmp_path, capsys):
    toy = tmp_path / "toy.yaml"
    toy.write_text(THREE_MACHINE_DOC)
    _run_all_commands(tmp_path / "a", toy)
    _run_all_commands(tmp_path / "b", toy)
    capsys.readouterr()

    compared, differing = 0, []
    for path in sorted((tmp_path / "a").rglob("*")):
        if path.is_dir():
            continue
        rel = path.relative_to(tmp_path / "a")
        other = tmp_path / "b" / rel
        if path.name == "training.csv":
            same = _without_wall_clock(path) == _without_wall_clock(other)
        else:
            same = path.read_bytes() == other.read_bytes()
        compared += 1
        if not same:
            differing.append(str(rel))
    ok = compared > 0 and not differing
    report(10, ok, f"{compared} output files from generate/train/eval/sweep/trace compared across two "
                   f"runs; differing: {differing or 'none'}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
