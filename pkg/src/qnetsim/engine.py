"""Event-driven simulation core.

Each step: allocate jobs to servers under the action, find the event with
the minimum residual time, accrue holding cost over the inter-epoch
interval at pre-event queue lengths, then apply the event.  Queue state is
tracked per job (preemptive-resume): a preempted job keeps its depleted
workload and can be picked up later by any compatible server.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .network import NetworkSpec, RngBundle


class InfeasibleAction(ValueError):
    """The action violates a feasibility invariant; signals a policy bug."""


class NoPendingEvents(RuntimeError):
    """All residual times are infinite; the system can never move again."""


class Job:
    """A single job: residual workload plus its arrival timestamp."""

    __slots__ = ("remaining", "arrival_time")

    def __init__(self, remaining: float, arrival_time: float):
        self.remaining = remaining
        self.arrival_time = arrival_time

    def __repr__(self):
        return f"Job(remaining={self.remaining:.6g}, arrival_time={self.arrival_time:.6g})"


@dataclass(slots=True)
class Observation:
    """Controller-visible projection of the state: clock + queue lengths."""

    clock: float
    queue_lengths: tuple[int, ...]


@dataclass(slots=True)
class Arrival:
    queue: int


@dataclass(slots=True)
class Completion:
    queue: int
    routed_to: Optional[int]  # None = departure from the system


@dataclass(slots=True)
class StepOutcome:
    observation: Observation
    elapsed: float
    cost: float
    event: Arrival | Completion
    terminal: bool
    in_service: int = 0  # job-server pairs active over the interval

    @property
    def reward(self) -> float:
        return -self.cost


@dataclass(frozen=True)
class Horizon:
    """Dual stopping rule: whichever of event count or clock comes first."""

    max_events: int = 50_000
    max_time: float = math.inf


class SimState:
    """Full dynamic state: clock, per-queue FIFO job lists, residual
    inter-arrival times, and the trajectory's RNG streams."""

    __slots__ = ("clock", "queues", "residual_arrivals", "rng", "step_index")

    def __init__(
        self,
        clock: float,
        queues: list[list[Job]],
        residual_arrivals: list[float],
        rng: RngBundle,
        step_index: int = 0,
    ):
        self.clock = clock
        self.queues = queues
        self.residual_arrivals = residual_arrivals
        self.rng = rng
        self.step_index = step_index

    def observe(self) -> Observation:
        return Observation(self.clock, tuple(len(q) for q in self.queues))


def initial_state(spec: NetworkSpec, rng: RngBundle) -> SimState:
    """State at time 0: init jobs with fresh workloads, arrivals scheduled."""
    queues: list[list[Job]] = []
    for i in range(spec.num_queues):
        svc = spec.service_specs[i]
        stream = rng.service[i]
        queues.append(
            [Job(svc.sample(stream), 0.0) for _ in range(int(spec.init_queues[i]))]
        )
    residuals = [
        spec.arrival_specs[i].sample(0.0, rng.arrival[i])
        for i in range(spec.num_queues)
    ]
    return SimState(0.0, queues, residuals, rng)


# An assignment pairs concrete jobs with server units: (queue, job, rate).
Assignment = list[tuple[int, Job, float]]


def allocate(state: SimState, action, spec: NetworkSpec) -> Assignment:
    """Pair jobs with the server units the action grants each queue.

    A queue granted k server units puts its k oldest jobs (FIFO order) into
    service; among those, faster server units take the jobs with smaller
    remaining workload.  Selection is deliberately non-predictive: realized
    workloads never influence *which* jobs enter service, only the pairing,
    so a single-server queue behaves exactly like M/M/1 FIFO.  Raises
    InfeasibleAction if the action exceeds pool sizes, assigns more servers
    to a queue than it has jobs, or touches a masked-out pair.
    """
    rates_t = spec.rates_t
    pools = spec.pools_t
    n = spec.num_servers
    col_used = [0] * n
    assignment: Assignment = []
    for i, row in enumerate(action):
        total = 0
        units: list[float] = []
        for j in range(n):
            cnt = row[j]
            if cnt:
                cnt = int(cnt)
                if cnt < 0:
                    raise InfeasibleAction(f"negative server count at ({i},{j})")
                rate = rates_t[i][j]
                if rate <= 0.0:
                    raise InfeasibleAction(f"assignment at masked pair ({i},{j})")
                col_used[j] += cnt
                total += cnt
                if cnt == 1:
                    units.append(rate)
                else:
                    units.extend([rate] * cnt)
        if not total:
            continue
        queue = state.queues[i]
        if total > len(queue):
            raise InfeasibleAction(
                f"queue {i} assigned {total} servers but holds {len(queue)} jobs"
            )
        if total == 1:
            assignment.append((i, queue[0], units[0]))
            continue
        chosen = sorted(queue[:total], key=_remaining_key)
        units.sort(reverse=True)
        for job, rate in zip(chosen, units):
            assignment.append((i, job, rate))
    for j in range(n):
        if col_used[j] > pools[j]:
            raise InfeasibleAction(
                f"server class {j} assigned {col_used[j]} units, pool is {pools[j]}"
            )
    return assignment


def _remaining_key(job: Job) -> float:
    return job.remaining


def next_event(
    state: SimState, assignment: Assignment
) -> tuple[Arrival | Completion, float, Optional[Job]]:
    """Minimum-residual-time event.

    Ties resolve deterministically: arrivals beat completions, then the
    lowest queue index wins (completions scan in allocation order).
    """
    best_tau = math.inf
    best_queue = -1
    for i, t in enumerate(state.residual_arrivals):
        if t < best_tau:
            best_tau = t
            best_queue = i
    event: Arrival | Completion | None = None
    job_done: Optional[Job] = None
    if best_queue >= 0:
        event = Arrival(best_queue)
    for i, job, rate in assignment:
        t = job.remaining / rate
        if t < best_tau:
            best_tau = t
            event = Completion(i, None)
            job_done = job
    if event is None or best_tau == math.inf:
        raise NoPendingEvents("every residual time is infinite")
    return event, best_tau, job_done


def apply_event(
    state: SimState,
    event: Arrival | Completion,
    tau: float,
    assignment: Assignment,
    spec: NetworkSpec,
    job_done: Optional[Job] = None,
) -> None:
    """Advance the clock, deplete residuals, and realize the event."""
    state.clock += tau
    clock = state.clock
    for _, job, rate in assignment:
        r = job.remaining - rate * tau
        job.remaining = r if r > 0.0 else 0.0
    residuals = state.residual_arrivals
    for i in range(len(residuals)):
        v = residuals[i] - tau
        residuals[i] = v if v > 0.0 else 0.0
    rng = state.rng
    if type(event) is Arrival:
        i = event.queue
        svc = spec.service_specs[i]
        state.queues[i].append(Job(svc.sample(rng.service[i]), clock))
        residuals[i] = spec.arrival_specs[i].sample(clock, rng.arrival[i])
    else:
        i = event.queue
        if job_done is None:
            raise ValueError("completion event requires the completing job")
        state.queues[i].remove(job_done)
        target = spec.routing_target[i]
        event.routed_to = target
        if target is not None:
            svc = spec.service_specs[target]
            state.queues[target].append(Job(svc.sample(rng.service[target]), clock))
    state.step_index += 1


def step(
    state: SimState, action, spec: NetworkSpec, horizon: Horizon
) -> StepOutcome:
    """One event-driven transition; reward convention is -cost."""
    assignment = allocate(state, action, spec)
    event, tau, job_done = next_event(state, assignment)
    costs = spec.costs_t
    queues = state.queues
    cost_rate = 0.0
    for i in range(len(costs)):
        cost_rate += costs[i] * len(queues[i])
    apply_event(state, event, tau, assignment, spec, job_done)
    terminal = (
        state.step_index >= horizon.max_events or state.clock >= horizon.max_time
    )
    return StepOutcome(
        observation=state.observe(),
        elapsed=tau,
        cost=cost_rate * tau,
        event=event,
        terminal=terminal,
        in_service=len(assignment),
    )


class Simulator:
    """Gym-flavoured wrapper: reset() gives an observation, step() advances."""

    def __init__(self, spec: NetworkSpec, seed: int, trajectory: int = 0,
                 horizon: Horizon = Horizon()):
        if not spec.validated:
            raise ValueError("spec must pass validate() before simulation")
        self.spec = spec
        self.seed = seed
        self.trajectory = trajectory
        self.horizon = horizon
        self.state: Optional[SimState] = None

    def reset(self) -> Observation:
        rng = RngBundle(self.seed, self.trajectory, self.spec.num_queues)
        self.state = initial_state(self.spec, rng)
        return self.state.observe()

    def step(self, action) -> StepOutcome:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        return step(self.state, action, self.spec, self.horizon)

    @property
    def policy_rng(self):
        if self.state is None:
            raise RuntimeError("call reset() before accessing policy_rng")
        return self.state.rng.policy
