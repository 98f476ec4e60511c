"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import functools
import sys

import numpy as np

from . import bench, fluid, instances, learn
from .config import ConfigError, load_config


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> _Parser:
    parser = _Parser(prog="qnetsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list-envs", help="list built-in instance names")

    def add_env(p):
        p.add_argument("--env", required=True,
                       help="built-in instance name or a config file path")

    run = sub.add_parser("run", help="run one trajectory")
    add_env(run)
    run.add_argument("--policy", required=True)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--events", type=int, default=None)
    run.add_argument("--time", type=float, default=None)
    run.add_argument("--trace", default=None, help="write per-event trace lines here")
    run.add_argument("--checkpoint", default=None)
    _add_fluid_flags(run)

    ev = sub.add_parser("evaluate", help="evaluate policies over many trajectories")
    add_env(ev)
    ev.add_argument("--policies", required=True, help="comma-separated policy names")
    ev.add_argument("--trajectories", type=int, default=100)
    ev.add_argument("--events", type=int, default=None)
    ev.add_argument("--time", type=float, default=None)
    ev.add_argument("--seed-base", type=int, default=0)
    ev.add_argument("--workers", type=int, default=1)
    ev.add_argument("--metric", default="in_system", choices=bench.METRICS,
                    help="queue-length counting convention")
    ev.add_argument("--output", default=None, help="CSV output path (default stdout)")
    ev.add_argument("--checkpoint", default=None)
    _add_fluid_flags(ev)

    tr = sub.add_parser("train", help="train a stochastic policy")
    add_env(tr)
    tr.add_argument("--algo", default="ppo-wc", choices=learn.ALGORITHMS)
    tr.add_argument("--episodes", type=int, default=10)
    tr.add_argument("--steps", type=int, default=5000)
    tr.add_argument("--actors", type=int, default=1)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--checkpoint", required=True, help="checkpoint output path")
    tr.add_argument("--curve", default=None, help="learning-curve CSV path")

    fl = sub.add_parser("solve-fluid", help="print the fluid LP plan for an instance")
    add_env(fl)
    fl.add_argument("--queues", default=None,
                    help="comma-separated queue lengths to plan from "
                         "(default: the instance's init_queues)")
    _add_fluid_flags(fl)
    return parser


def _add_fluid_flags(p):
    p.add_argument("--fluid-grid", type=int, default=fluid.DEFAULT_GRID)
    p.add_argument("--fluid-horizon", type=float, default=None)
    p.add_argument("--fluid-resolve-every", type=int,
                   default=fluid.DEFAULT_RESOLVE_EVERY)


def _load_env(name_or_path):
    try:
        return instances.get_instance(name_or_path)
    except KeyError:
        pass
    return load_config(name_or_path)


def _policy_factory(args, name):
    return functools.partial(
        bench.make_policy,
        name,
        checkpoint=getattr(args, "checkpoint", None),
        fluid_grid=getattr(args, "fluid_grid", fluid.DEFAULT_GRID),
        fluid_horizon=getattr(args, "fluid_horizon", None),
        fluid_resolve_every=getattr(args, "fluid_resolve_every",
                                    fluid.DEFAULT_RESOLVE_EVERY),
    )


def _factory_call(factory, spec):
    # make_policy takes (name, spec, ...); partial binds name, so adapt.
    return factory(spec)


def cmd_list_envs(args) -> int:
    for name in sorted(instances.builtin_instances()):
        print(name)
    return 0


def cmd_run(args) -> int:
    cfg = _load_env(args.env)
    spec = bench.spec_for(cfg)
    horizon = bench.horizon_for(cfg, args.events, args.time)
    factory = _policy_factory(args, args.policy)
    policy = factory(spec)
    trace = open(args.trace, "w", encoding="utf-8") if args.trace else None
    try:
        metrics = bench.run_trajectory(spec, policy, horizon, args.seed, trace=trace)
    finally:
        if trace:
            trace.close()
    print(f"env: {cfg.name}")
    print(f"policy: {args.policy}")
    print(f"events: {metrics.event_count}")
    print(f"elapsed_time: {metrics.elapsed_time:.6g}")
    print(f"time_avg_total_queue: {metrics.time_avg:.6g}")
    print(f"time_avg_waiting: {metrics.time_avg_waiting:.6g}")
    print(f"total_weighted_cost: {metrics.total_weighted_cost:.6g}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_env(args.env)
    spec = bench.spec_for(cfg)
    horizon = bench.horizon_for(cfg, args.events, args.time)
    names = [p.strip() for p in args.policies.split(",") if p.strip()]
    if not names:
        raise ConfigError("no policies given")
    reports = []
    for name in names:
        factory = _policy_factory(args, name)
        reports.append(
            bench.evaluate(spec, factory, args.trajectories, horizon,
                           args.seed_base, args.workers, policy_name=name,
                           metric=args.metric)
        )
    text = bench.report_csv(reports)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_train(args) -> int:
    cfg = _load_env(args.env)
    spec = bench.spec_for(cfg)
    result = learn.train(spec, args.algo, args.episodes, args.steps,
                         seed=args.seed, actors=args.actors)
    learn.save_checkpoint(args.checkpoint, result.policy, result.value_fn)
    print(f"saved checkpoint to {args.checkpoint}")
    if args.curve:
        with open(args.curve, "w", encoding="utf-8") as fh:
            fh.write("episode,mean_cost,std_cost\n")
            for ep, mean, std in result.curve:
                fh.write(f"{ep},{mean:.6g},{std:.6g}\n")
        print(f"wrote learning curve to {args.curve}")
    for ep, mean, std in result.curve:
        print(f"episode {ep}: mean cost {mean:.6g} (std {std:.6g})")
    return 0


def cmd_solve_fluid(args) -> int:
    cfg = _load_env(args.env)
    spec = bench.spec_for(cfg)
    if args.queues:
        q = tuple(int(x) for x in args.queues.split(","))
        if len(q) != spec.num_queues:
            raise ConfigError(f"--queues needs {spec.num_queues} entries")
    else:
        q = tuple(int(x) for x in spec.init_queues)
    from .engine import Observation

    obs = Observation(0.0, q)
    fl = fluid.build_fluid_lp(spec, obs, args.fluid_grid, args.fluid_horizon)
    plan = fluid.solve_fluid(fl)
    print(f"env: {cfg.name}")
    print(f"queues: {q}")
    print(f"grid: {plan.grid} cells, h = {plan.h:.6g}")
    print(f"optimal fluid cost: {plan.value:.6g}")
    print("first-cell allocation u0 (rows = queues, cols = server classes):")
    with np.printoptions(precision=4, suppress=True):
        print(plan.u0)
    return 0


COMMANDS = {
    "list-envs": cmd_list_envs,
    "run": cmd_run,
    "evaluate": cmd_evaluate,
    "train": cmd_train,
    "solve-fluid": cmd_solve_fluid,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, KeyError, FileNotFoundError, ValueError) as exc:
        print(f"qnetsim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
