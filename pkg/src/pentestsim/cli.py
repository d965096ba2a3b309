"""Command-line front end: ``pentestsim <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .agents import AGENT_KINDS
from .harness import ExperimentSpec
from .network import validate
from .render import render_trace, write_trace
from .scenario import ExploitMode, GeneratorError, GeneratorParams, ScenarioError, generate_network, load_scenario, solvability_oracle


def _scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="scenario YAML file, or a shipped fixture name "
                   f"({', '.join(harness.FIXTURES)})")
    p.add_argument("--machines", type=int, help="generate a network with this many machines")
    p.add_argument("--services", type=int, help="number of services for a generated network")
    p.add_argument("--exploit-mode", default="cvss", choices=[m.value for m in ExploitMode if m is not ExploitMode.USER],
                   help="exploit success probabilities for generated networks (default: cvss)")


def _run_flags(p: argparse.ArgumentParser, eval_runs: int = 30) -> None:
    p.add_argument("--agent", default="tabular-eps", choices=AGENT_KINDS)
    p.add_argument("--budget-secs", type=float, default=120.0, help="training wall-clock budget (default: 120)")
    p.add_argument("--max-episodes", type=int, default=None,
                   help="also stop training after this many episodes (needed for exactly reproducible logs)")
    p.add_argument("--eval-runs", type=int, default=eval_runs, help=f"evaluation episodes (default: {eval_runs})")
    p.add_argument("--eval-eps", type=float, default=0.05, help="epsilon during evaluation (default: 0.05)")
    p.add_argument("--max-steps", type=int, default=500, help="step cap per episode (default: 500)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="NAME=VALUE",
                   help="override an agent hyperparameter, e.g. --set alpha=0.2 (repeatable)")
    p.add_argument("--out", type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pentestsim", description="Network attack simulator and RL experiment harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a scenario document")
    p.add_argument("--machines", type=int, required=True)
    p.add_argument("--services", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exploit-mode", default="cvss", choices=[m.value for m in ExploitMode])
    p.add_argument("--exploit-probs", type=float, nargs="+", help="per-service probabilities for --exploit-mode user")
    p.add_argument("--restrictiveness", type=int, default=5, help="max services allowed per firewall rule (default: 5)")
    p.add_argument("--alpha", type=float, default=1.0, help="configuration correlation parameter (default: 1.0)")
    p.add_argument("--out", type=Path, help="write the document here instead of stdout")

    p = sub.add_parser("validate", help="check a scenario document")
    p.add_argument("scenario")

    p = sub.add_parser("train", help="train an agent, evaluate it and save logs and a checkpoint")
    _scenario_flags(p)
    p.add_argument("--seed", type=int, default=0)
    _run_flags(p)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint (or the random baseline)")
    _scenario_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", type=Path)
    _run_flags(p)

    p = sub.add_parser("sweep", help="scaling sweep over machines or services")
    p.add_argument("kind", choices=["machines", "services"])
    p.add_argument("--machines", type=int, help="fixed machine count for a services sweep (default: 18)")
    p.add_argument("--services", type=int, help="fixed service count for a machines sweep (default: 5)")
    p.add_argument("--exploit-mode", default="cvss", choices=["deterministic", "cvss"])
    p.add_argument("--grid", type=int, nargs="+", help="override the swept values")
    p.add_argument("--seeds", type=int, nargs="+", default=list(range(10)), help="generation seeds (default: 0..9)")
    p.add_argument("--workers", type=int, default=1)
    _run_flags(p, eval_runs=10)

    p = sub.add_parser("bench", help="load-time and actions/second benchmark")
    p.add_argument("--sizes", nargs="+", default=["40x10", "480x10"], metavar="MxE",
                   help="network sizes as MACHINESxSERVICES (default: 40x10 480x10)")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--actions", type=int, default=10_000, help="sequential actions per throughput run")
    p.add_argument("--load-only", action="store_true", help="skip the throughput measurement")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("trace", help="play one episode and write JSON-lines and DOT traces")
    _scenario_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", type=Path, help="policy to follow (default: uniformly random)")
    p.add_argument("--eval-eps", type=float, default=0.0)
    p.add_argument("--max-steps", type=int, default=500)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _spec(args, seeds) -> ExperimentSpec:
    return ExperimentSpec(
        agent=args.agent,
        scenario=getattr(args, "scenario", None),
        machines=args.machines,
        services=args.services,
        exploit_mode=args.exploit_mode,
        budget=args.budget_secs,
        seeds=tuple(seeds),
        eval_runs=args.eval_runs,
        eval_eps=args.eval_eps,
        max_steps=args.max_steps,
        max_episodes=args.max_episodes,
        overrides=harness.parse_overrides(args.overrides),
    )


def _parse_size(text: str) -> tuple[int, int]:
    m, sep, e = text.lower().partition("x")
    if not sep:
        raise ValueError(f"size must look like MACHINESxSERVICES, got {text!r}")
    return int(m), int(e)


def _print_json(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_generate(args) -> int:
    params = GeneratorParams(
        args.machines, args.services, exploit_mode=ExploitMode(args.exploit_mode), seed=args.seed,
        exploit_probs=args.exploit_probs, restrictiveness=args.restrictiveness, correlation_alpha=args.alpha,
    )
    doc = harness.write_scenario(generate_network(params), args.out)
    if args.out is None:
        sys.stdout.write(doc)
    return 0


def cmd_validate(args) -> int:
    net = load_scenario(harness.resolve_scenario(args.scenario).read_text(), check=False)
    problems = validate(net)
    if problems:
        for p in problems:
            print(f"error: {p}")
        return 1
    res = solvability_oracle(net)
    print(f"ok: {net.num_machines} machines, {net.num_services} services, {net.num_subnets} subnets")
    print(f"minimum exploits to win: {res.min_exploits} (cost {res.min_exploit_cost:g})")
    print(f"theoretical max reward: {res.theoretical_max:g}")
    print("witness: " + ", ".join(f"{a.subnet},{a.machine}:{svc}" for a, svc in res.witness))
    return 0


def cmd_train(args) -> int:
    spec = _spec(args, [args.seed])
    rec = harness.run_train(spec, args.seed, args.out)
    _print_json(rec.metadata(spec))
    return 0


def cmd_eval(args) -> int:
    spec = _spec(args, [args.seed])
    ev = harness.run_eval(spec, args.seed, args.checkpoint, args.out)
    _print_json(ev.summary())
    return 0


def cmd_sweep(args) -> int:
    grid, fixed = harness.sweep_grid(args.kind)
    grid = args.grid or grid
    if args.kind == "machines":
        args.machines, args.services = grid[0], args.services or fixed
    else:
        args.machines, args.services = args.machines or fixed, grid[0]
    spec = _spec(args, args.seeds)
    rows, _ = harness.run_sweep(args.kind, spec, args.grid, args.out, workers=args.workers)
    _print_json(harness.sweep_summary(rows))
    return 0


def cmd_bench(args) -> int:
    sizes = [_parse_size(s) for s in args.sizes]
    rows = harness.run_bench(sizes, args.repeats, args.actions, args.out, measure_throughput=not args.load_only)
    _print_json(rows)
    return 0


def cmd_trace(args) -> int:
    import random

    spec = ExperimentSpec(
        agent="random" if args.checkpoint is None else "tabular-eps",
        scenario=args.scenario, machines=args.machines, services=args.services,
        exploit_mode=args.exploit_mode, seeds=(args.seed,), max_steps=args.max_steps,
    )
    net = harness.build_network(spec, args.seed)
    if args.checkpoint is None:
        policy, eps = harness.UniformPolicy(), 1.0
    else:
        policy, eps = harness.load_checkpoint(args.checkpoint), args.eval_eps
    episode = harness.record_episode(net, policy, eps, args.max_steps, random.Random(f"trace:{args.seed}"))
    trace = render_trace(net, episode)
    args.out.mkdir(parents=True, exist_ok=True)
    write_trace(trace, args.out / "trace.jsonl", args.out / "trace.dot")
    _print_json({"steps": len(trace.records), "return": trace.total_reward,
                 "goal_reached": bool(trace.records[-1].done)})
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "validate": cmd_validate,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
    "trace": cmd_trace,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ScenarioError, GeneratorError, ValueError, OSError) as exc:
        print(f"pentestsim {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
