"""Benchmark harness: trajectory runs, evaluation campaigns, reports.

The benchmark metric is the time-averaged total queue length
(1/t_n) * integral of sum_i Q_i(t) dt, accumulated exactly as a
left-constant Riemann sum; reports carry the mean over independent
trajectories plus its standard error.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .config import EnvConfig, to_network_spec
from .engine import Arrival, Horizon, NoPendingEvents, Simulator
from .fluid import FluidPolicy
from .learn import StochasticPolicy, load_checkpoint
from .network import NetworkSpec
from .policies import (
    CmuPolicy,
    MaxPressurePolicy,
    MaxWeightPolicy,
    RandomPolicy,
)

POLICY_NAMES = ("cmu", "maxweight", "maxpressure", "fluid", "random",
                "softmax", "softmax-wc")


METRICS = ("in_system", "waiting")


@dataclass
class TrajectoryMetrics:
    total_weighted_cost: float
    total_unweighted_queue_time: float  # integral of sum_i Q_i dt (in system)
    elapsed_time: float
    event_count: int
    total_waiting_queue_time: float = 0.0  # same integral minus jobs in service

    @property
    def time_avg(self) -> float:
        """Time-averaged number in system (queued jobs include in-service)."""
        if self.elapsed_time <= 0.0:
            return 0.0
        return self.total_unweighted_queue_time / self.elapsed_time

    @property
    def time_avg_waiting(self) -> float:
        """Time-averaged number of jobs not in service.

        This is the counting convention behind the published reference
        means for the criss-cross instance: a job stops counting while a
        server works on it.
        """
        if self.elapsed_time <= 0.0:
            return 0.0
        return self.total_waiting_queue_time / self.elapsed_time

    def metric(self, name: str) -> float:
        if name == "in_system":
            return self.time_avg
        if name == "waiting":
            return self.time_avg_waiting
        raise ValueError(f"unknown metric {name!r}; want one of {METRICS}")


@dataclass
class EvaluationReport:
    policy: str
    mean: float
    stderr: float
    trajectories: int
    seed_base: int
    per_trajectory: tuple[float, ...]


def make_policy(
    name: str,
    spec: NetworkSpec,
    checkpoint: Optional[str] = None,
    fluid_grid: int = 50,
    fluid_horizon: Optional[float] = None,
    fluid_resolve_every: int = 1000,
    policy_seed: int = 0,
):
    """Fresh policy instance by CLI name (fresh per trajectory: some policies
    carry per-trajectory mutable state such as the cached fluid plan)."""
    if name == "cmu":
        return CmuPolicy(spec)
    if name == "maxweight":
        return MaxWeightPolicy(spec)
    if name == "maxpressure":
        return MaxPressurePolicy(spec)
    if name == "random":
        return RandomPolicy(spec)
    if name == "fluid":
        return FluidPolicy(spec, fluid_grid, fluid_horizon, fluid_resolve_every)
    if name in ("softmax", "softmax-wc"):
        if checkpoint:
            policy, _ = load_checkpoint(checkpoint, spec)
            policy.work_conserving = name == "softmax-wc"
            return policy
        return StochasticPolicy(
            spec, work_conserving=(name == "softmax-wc"), seed=policy_seed
        )
    raise KeyError(f"unknown policy {name!r}; known: {', '.join(POLICY_NAMES)}")


def _event_label(event) -> str:
    if type(event) is Arrival:
        return f"arrival({event.queue})"
    dest = "out" if event.routed_to is None else str(event.routed_to)
    return f"completion({event.queue}->{dest})"


def run_trajectory(
    spec: NetworkSpec,
    policy,
    horizon: Horizon,
    seed: int,
    trajectory: int = 0,
    trace=None,
) -> TrajectoryMetrics:
    """Step the engine under the policy until the horizon.

    ``trace``, if given, is a writable text file: one tab-separated line
    per event (step, clock, event, queue lengths, step cost).
    """
    sim = Simulator(spec, seed, trajectory, horizon)
    obs = sim.reset()
    rng = sim.policy_rng
    weighted = 0.0
    unweighted = 0.0
    waiting = 0.0
    steps = 0
    while True:
        action = policy.action(spec, obs, rng)
        total_q = 0
        for q in obs.queue_lengths:
            total_q += q
        try:
            out = sim.step(action)
        except NoPendingEvents:
            # Frozen system (e.g. exhausted trace, nothing serviceable):
            # the metrics accumulated so far are final.
            break
        weighted += out.cost
        unweighted += total_q * out.elapsed
        waiting += (total_q - out.in_service) * out.elapsed
        steps += 1
        obs = out.observation
        if trace is not None:
            qs = ",".join(map(str, obs.queue_lengths))
            trace.write(
                f"{steps}\t{obs.clock!r}\t{_event_label(out.event)}\t{qs}\t{out.cost!r}\n"
            )
        if out.terminal:
            break
    return TrajectoryMetrics(weighted, unweighted, sim.state.clock, steps, waiting)


def _evaluate_one(args) -> float:
    spec, factory, horizon, seed_base, index, metric = args
    policy = factory(spec)
    return run_trajectory(spec, policy, horizon, seed_base, index).metric(metric)


def evaluate(
    spec: NetworkSpec,
    policy_factory: Callable[[NetworkSpec], object],
    trajectories: int = 100,
    horizon: Horizon = Horizon(),
    seed_base: int = 0,
    workers: int = 1,
    policy_name: Optional[str] = None,
    metric: str = "in_system",
) -> EvaluationReport:
    """Mean +- stderr of the time-averaged total queue length.

    Trajectory ``t`` always uses the RNG streams addressed by
    (seed_base, t), so the report is byte-identical for any worker count.
    ``metric`` picks the counting convention: jobs in system (default) or
    waiting jobs only.
    """
    if trajectories < 2:
        raise ValueError("need at least 2 trajectories for a standard error")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; want one of {METRICS}")
    name = policy_name or getattr(policy_factory(spec), "name", "policy")
    tasks = [(spec, policy_factory, horizon, seed_base, t, metric)
             for t in range(trajectories)]
    if workers and workers > 1:
        with multiprocessing.Pool(workers) as pool:
            values = pool.map(_evaluate_one, tasks)
    else:
        values = [_evaluate_one(t) for t in tasks]
    arr = np.asarray(values, dtype=float)
    return EvaluationReport(
        policy=name,
        mean=float(arr.mean()),
        stderr=float(arr.std(ddof=1) / math.sqrt(trajectories)),
        trajectories=trajectories,
        seed_base=seed_base,
        per_trajectory=tuple(values),
    )


def horizon_for(cfg: EnvConfig, events: Optional[int] = None,
                max_time: Optional[float] = None) -> Horizon:
    """Horizon from CLI overrides, falling back to the config then defaults."""
    n = events if events is not None else (cfg.max_events or 50_000)
    t = max_time if max_time is not None else (cfg.max_time or math.inf)
    return Horizon(max_events=n, max_time=t)


def report_csv(reports: list[EvaluationReport]) -> str:
    lines = ["policy,mean,stderr,trajectories,seed_base"]
    for r in reports:
        lines.append(
            f"{r.policy},{r.mean:.6g},{r.stderr:.6g},{r.trajectories},{r.seed_base}"
        )
    return "\n".join(lines) + "\n"


def spec_for(cfg: EnvConfig) -> NetworkSpec:
    return to_network_spec(cfg)
