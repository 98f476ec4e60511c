"""Static network description and stochastic input primitives.

A network is a set of M job-class queues and N server classes (pools).
Matrices are stored queue-major: entry ``[i][j]`` refers to queue ``i``
and server class ``j``.  Service requirements are drawn as unit-mean
workloads; a server of class ``j`` depletes a queue-``i`` workload at
rate ``rates[i][j]``, so the service duration is ``workload / rate``.
"""

from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

# Arrival rate used for queues that should effectively never receive
# external arrivals (literal infinity would poison residual arithmetic).
DISABLED_RATE = 1e-6


class NetworkSpecError(ValueError):
    """Base class for network validation failures."""


class DimensionMismatch(NetworkSpecError):
    pass


class MaskViolation(NetworkSpecError):
    pass


class BadRouting(NetworkSpecError):
    pass


# ---------------------------------------------------------------------------
# Arrival processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Exponential:
    """Poisson arrivals at a constant rate."""

    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise NetworkSpecError(f"arrival rate must be positive, got {self.rate}")

    def sample(self, now: float, rng: random.Random) -> float:
        d = rng.expovariate(self.rate)
        while d <= 0.0:
            d = rng.expovariate(self.rate)
        return d

    def rate_at(self, t: float) -> float:
        return self.rate


@dataclass(frozen=True)
class Hyperexponential:
    """Mixture of exponentials; coefficient of variation exceeds 1."""

    weights: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if len(self.weights) != len(self.rates):
            raise NetworkSpecError("mixture weights and rates differ in length")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise NetworkSpecError("mixture weights must be nonnegative and sum to 1")
        if any(r <= 0 for r in self.rates):
            raise NetworkSpecError("mixture rates must be positive")

    def sample(self, now: float, rng: random.Random) -> float:
        u = rng.random()
        acc = 0.0
        k = len(self.weights) - 1
        for idx, w in enumerate(self.weights):
            acc += w
            if u < acc:
                k = idx
                break
        d = rng.expovariate(self.rates[k])
        while d <= 0.0:
            d = rng.expovariate(self.rates[k])
        return d

    def rate_at(self, t: float) -> float:
        mean = sum(w / r for w, r in zip(self.weights, self.rates))
        return 1.0 / mean


@dataclass(frozen=True)
class Deterministic:
    """Arrivals on a fixed interval."""

    interval: float

    def __post_init__(self):
        if self.interval <= 0:
            raise NetworkSpecError("deterministic interval must be positive")

    def sample(self, now: float, rng: random.Random) -> float:
        return self.interval

    def rate_at(self, t: float) -> float:
        return 1.0 / self.interval


@dataclass(frozen=True)
class TimeVarying:
    """Piecewise-constant rate table, extended cyclically over [0, inf).

    ``breaks`` are the right endpoints of the segments: segment ``s``
    covers ``[breaks[s-1], breaks[s])`` with an implicit 0 start, and the
    whole table repeats with period ``breaks[-1]``.  Sampling inverts the
    integrated rate, so draws are exact and rejection-free.
    """

    breaks: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "breaks", tuple(float(b) for b in self.breaks))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if len(self.breaks) != len(self.rates) or not self.breaks:
            raise NetworkSpecError("breaks and rates must be equal-length, nonempty")
        if self.breaks[0] <= 0 or any(
            b2 <= b1 for b1, b2 in zip(self.breaks, self.breaks[1:])
        ):
            raise NetworkSpecError("breaks must be strictly increasing and positive")
        if any(r < 0 for r in self.rates):
            raise NetworkSpecError("rates must be nonnegative")
        if sum(self.rates) <= 0:
            raise NetworkSpecError("at least one segment rate must be positive")

    def integrated_rate(self, t: float) -> float:
        """Cumulative expected arrivals on [0, t]."""
        period = self.breaks[-1]
        seg_mass = [r * (b - a) for r, a, b in self._segments()]
        cycle_mass = sum(seg_mass)
        full, phase = divmod(t, period)
        total = full * cycle_mass
        for (r, a, b), m in zip(self._segments(), seg_mass):
            if phase >= b:
                total += m
            else:
                total += r * max(phase - a, 0.0)
                break
        return total

    def _segments(self):
        start = 0.0
        for b, r in zip(self.breaks, self.rates):
            yield r, start, b
            start = b

    def sample(self, now: float, rng: random.Random) -> float:
        target = rng.expovariate(1.0)
        while target <= 0.0:
            target = rng.expovariate(1.0)
        period = self.breaks[-1]
        cycle_mass = sum(r * (b - a) for r, a, b in self._segments())
        duration = 0.0
        pos = math.fmod(now, period)
        # Finish the current cycle segment by segment.
        first = True
        while True:
            for r, a, b in self._segments():
                if first and b <= pos:
                    continue
                lo = max(a, pos) if first else a
                cap = r * (b - lo)
                if r > 0.0 and target <= cap:
                    return duration + target / r
                target -= cap
                duration += b - lo
            if first:
                first = False
                pos = 0.0
            # Skip whole cycles in one shot.
            if cycle_mass > 0:
                n = int(target // cycle_mass)
                if n > 0:
                    target -= n * cycle_mass
                    duration += n * period

    def rate_at(self, t: float) -> float:
        phase = math.fmod(t, self.breaks[-1])
        for r, a, b in self._segments():
            if phase < b:
                return r
        return self.rates[-1]


@dataclass(frozen=True)
class Trace:
    """Arrivals at a fixed, strictly increasing list of timestamps."""

    times: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        if any(t2 <= t1 for t1, t2 in zip(self.times, self.times[1:])):
            raise NetworkSpecError("trace timestamps must be strictly increasing")

    def sample(self, now: float, rng: random.Random) -> float:
        idx = bisect.bisect_right(self.times, now)
        if idx >= len(self.times):
            return math.inf
        return self.times[idx] - now

    def rate_at(self, t: float) -> float:
        return 0.0


def disabled() -> Exponential:
    """Arrival process for a queue with no meaningful external input."""
    return Exponential(DISABLED_RATE)


ArrivalSpec = Union[Exponential, Hyperexponential, Deterministic, TimeVarying, Trace]


def sample_interarrival(spec: ArrivalSpec, now: float, rng: random.Random) -> float:
    """Time from ``now`` until the next external arrival."""
    return spec.sample(now, rng)


# ---------------------------------------------------------------------------
# Service workload distributions (all unit mean)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpWorkload:
    def sample(self, rng: random.Random) -> float:
        w = rng.expovariate(1.0)
        while w <= 0.0:
            w = rng.expovariate(1.0)
        return w


@dataclass(frozen=True)
class DetWorkload:
    def sample(self, rng: random.Random) -> float:
        return 1.0


@dataclass(frozen=True)
class HyperWorkload:
    """Mixture of exponentials with component means; overall mean must be 1."""

    weights: tuple[float, ...]
    means: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        if len(self.weights) != len(self.means):
            raise NetworkSpecError("mixture weights and means differ in length")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise NetworkSpecError("mixture weights must be nonnegative and sum to 1")
        if any(m <= 0 for m in self.means):
            raise NetworkSpecError("mixture means must be positive")
        mean = sum(w * m for w, m in zip(self.weights, self.means))
        if abs(mean - 1.0) > 1e-9:
            raise NetworkSpecError(f"mixture mean must be 1, got {mean}")

    @property
    def scv(self) -> float:
        """Squared coefficient of variation: 2*sum(w*m^2) - 1."""
        return 2.0 * sum(w * m * m for w, m in zip(self.weights, self.means)) - 1.0

    def sample(self, rng: random.Random) -> float:
        u = rng.random()
        acc = 0.0
        k = len(self.weights) - 1
        for idx, w in enumerate(self.weights):
            acc += w
            if u < acc:
                k = idx
                break
        w = rng.expovariate(1.0 / self.means[k])
        while w <= 0.0:
            w = rng.expovariate(1.0 / self.means[k])
        return w


ServiceSpec = Union[ExpWorkload, DetWorkload, HyperWorkload]


def sample_workload(spec: ServiceSpec, rng: random.Random) -> float:
    """Unit-mean service requirement for a fresh job."""
    return spec.sample(rng)


# ---------------------------------------------------------------------------
# Seedable substreams
# ---------------------------------------------------------------------------


def substream(root_seed: int, *path: int) -> random.Random:
    """Independent ``random.Random`` stream for a (seed, *path) address.

    Uses numpy's SeedSequence so that distinct paths give statistically
    independent streams while staying byte-reproducible across processes.
    """
    ss = np.random.SeedSequence(entropy=(int(root_seed),) + tuple(int(p) for p in path))
    state = ss.generate_state(2, dtype=np.uint64)
    return random.Random(int(state[0]) << 64 | int(state[1]))


class RngBundle:
    """Per-trajectory collection of substreams, one per (queue, purpose).

    Arrival and service draws for each queue come from dedicated streams so
    that trajectories are reproducible independently of event interleaving.
    """

    _ARRIVAL, _SERVICE, _POLICY = 1, 2, 3

    def __init__(self, seed: int, trajectory: int, num_queues: int):
        self.seed = seed
        self.trajectory = trajectory
        self.arrival = [
            substream(seed, trajectory, self._ARRIVAL, i) for i in range(num_queues)
        ]
        self.service = [
            substream(seed, trajectory, self._SERVICE, i) for i in range(num_queues)
        ]
        self.policy = substream(seed, trajectory, self._POLICY, 0)


# ---------------------------------------------------------------------------
# Network specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetworkSpec:
    """Static description of a queueing network.

    ``routing[i]`` is the queue-length delta applied when a queue-``i`` job
    completes: exactly one -1 (at ``i``) and at most one +1 (the downstream
    queue).  ``routing_probs`` is derived by :func:`validate`.
    """

    topology: np.ndarray
    rates: np.ndarray
    holding_costs: np.ndarray
    pool_sizes: np.ndarray
    routing: tuple[tuple[int, ...], ...]
    arrival_specs: tuple[ArrivalSpec, ...]
    service_specs: tuple[ServiceSpec, ...]
    init_queues: np.ndarray
    routing_probs: Optional[np.ndarray] = None
    # Derived lookups, populated by validate().
    routing_target: tuple[Optional[int], ...] = field(default=(), repr=False)
    server_queues: tuple[tuple[int, ...], ...] = field(default=(), repr=False)
    queue_servers: tuple[tuple[int, ...], ...] = field(default=(), repr=False)
    rates_t: tuple[tuple[float, ...], ...] = field(default=(), repr=False)
    costs_t: tuple[float, ...] = field(default=(), repr=False)
    pools_t: tuple[int, ...] = field(default=(), repr=False)

    @property
    def num_queues(self) -> int:
        return self.topology.shape[0]

    @property
    def num_servers(self) -> int:
        return self.topology.shape[1]

    @property
    def validated(self) -> bool:
        return self.routing_probs is not None

    @property
    def single_server_per_queue(self) -> bool:
        """True when every queue is compatible with at most one server class."""
        return all(len(s) <= 1 for s in self.queue_servers)


def make_spec(
    topology: Sequence[Sequence[int]],
    rates: Sequence[Sequence[float]],
    holding_costs: Sequence[float],
    routing: Sequence[Sequence[int]],
    arrival_specs: Sequence[ArrivalSpec],
    service_specs: Sequence[ServiceSpec],
    init_queues: Optional[Sequence[int]] = None,
    pool_sizes: Optional[Sequence[int]] = None,
) -> NetworkSpec:
    """Assemble and validate a NetworkSpec from plain sequences."""
    topo = np.asarray(topology, dtype=np.int8)
    m = topo.shape[0] if topo.ndim == 2 else 0
    n = topo.shape[1] if topo.ndim == 2 else 0
    spec = NetworkSpec(
        topology=topo,
        rates=np.asarray(rates, dtype=float),
        holding_costs=np.asarray(holding_costs, dtype=float),
        pool_sizes=np.asarray(
            pool_sizes if pool_sizes is not None else [1] * n, dtype=np.int64
        ),
        routing=tuple(tuple(int(x) for x in row) for row in routing),
        arrival_specs=tuple(arrival_specs),
        service_specs=tuple(service_specs),
        init_queues=np.asarray(
            init_queues if init_queues is not None else [0] * m, dtype=np.int64
        ),
    )
    return validate(spec)


def validate(spec: NetworkSpec) -> NetworkSpec:
    """Check all structural invariants and attach derived routing data."""
    topo = np.asarray(spec.topology, dtype=np.int8)
    rates = np.asarray(spec.rates, dtype=float)
    if topo.ndim != 2:
        raise DimensionMismatch("topology must be a 2-D matrix")
    m, n = topo.shape
    if rates.shape != (m, n):
        raise DimensionMismatch(
            f"rates shape {rates.shape} does not match topology {(m, n)}"
        )
    if not np.isin(topo, (0, 1)).all():
        raise MaskViolation("topology entries must be 0 or 1")
    if (rates < 0).any():
        raise MaskViolation("service rates must be nonnegative")
    if ((rates > 0) & (topo == 0)).any():
        raise MaskViolation("positive rate where topology mask is 0")
    if ((rates == 0) & (topo == 1)).any():
        raise MaskViolation("zero rate where topology mask is 1")

    costs = np.asarray(spec.holding_costs, dtype=float)
    if costs.shape != (m,):
        raise DimensionMismatch(f"holding_costs must have length {m}")
    if (costs <= 0).any():
        raise NetworkSpecError("holding costs must be positive")

    pools = np.asarray(spec.pool_sizes, dtype=np.int64)
    if pools.shape != (n,):
        raise DimensionMismatch(f"pool_sizes must have length {n}")
    if (pools < 1).any():
        raise NetworkSpecError("pool sizes must be at least 1")

    init = np.asarray(spec.init_queues, dtype=np.int64)
    if init.shape != (m,):
        raise DimensionMismatch(f"init_queues must have length {m}")
    if (init < 0).any():
        raise NetworkSpecError("init_queues must be nonnegative")

    if len(spec.routing) != m:
        raise BadRouting(f"need one routing delta per queue, got {len(spec.routing)}")
    probs = np.zeros((m, m), dtype=float)
    targets: list[Optional[int]] = []
    for i, delta in enumerate(spec.routing):
        if len(delta) != m:
            raise BadRouting(f"routing delta {i} has length {len(delta)}, want {m}")
        if any(d not in (-1, 0, 1) for d in delta):
            raise BadRouting(f"routing delta {i} has entries outside {{-1,0,1}}")
        minus = [k for k, d in enumerate(delta) if d == -1]
        plus = [k for k, d in enumerate(delta) if d == 1]
        if minus != [i]:
            raise BadRouting(f"routing delta {i} must have its single -1 at {i}")
        if len(plus) > 1:
            raise BadRouting(f"routing delta {i} has more than one +1")
        if plus:
            probs[i, plus[0]] = 1.0
            targets.append(plus[0])
        else:
            targets.append(None)

    if len(spec.arrival_specs) != m:
        raise DimensionMismatch(f"need {m} arrival specs, got {len(spec.arrival_specs)}")
    if len(spec.service_specs) != m:
        raise DimensionMismatch(f"need {m} service specs, got {len(spec.service_specs)}")

    server_queues = tuple(
        tuple(int(i) for i in range(m) if topo[i, j]) for j in range(n)
    )
    queue_servers = tuple(
        tuple(int(j) for j in range(n) if topo[i, j]) for i in range(m)
    )
    topo.setflags(write=False)
    rates.setflags(write=False)
    costs.setflags(write=False)
    pools.setflags(write=False)
    init.setflags(write=False)
    return replace(
        spec,
        topology=topo,
        rates=rates,
        holding_costs=costs,
        pool_sizes=pools,
        init_queues=init,
        routing_probs=probs,
        routing_target=tuple(targets),
        server_queues=server_queues,
        queue_servers=queue_servers,
        rates_t=tuple(tuple(float(x) for x in row) for row in rates),
        costs_t=tuple(float(c) for c in costs),
        pools_t=tuple(int(p) for p in pools),
    )
