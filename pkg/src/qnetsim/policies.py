"""Classical priority-index policies and the linear-assignment rule.

A policy scores every (queue, server-class) pair with a real priority;
``assign`` then turns the score matrix into a feasible integer assignment
maximizing the total scored value.  Pairs with nonpositive priority are
never assigned: a server idles rather than serve a zero-value queue.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .engine import Observation
from .network import NetworkSpec


def priority_cmu(spec: NetworkSpec, obs: Observation) -> np.ndarray:
    """rho[i][j] = c_i * mu[i][j]; independent of the observation."""
    return spec.holding_costs[:, None] * spec.rates


def priority_maxweight(spec: NetworkSpec, obs: Observation) -> np.ndarray:
    """rho[i][j] = c_i * Q_i * mu[i][j]."""
    q = np.asarray(obs.queue_lengths, dtype=float)
    return (spec.holding_costs * q)[:, None] * spec.rates


def priority_maxpressure(spec: NetworkSpec, obs: Observation) -> np.ndarray:
    """MaxWeight corrected by downstream congestion through routing."""
    q = np.asarray(obs.queue_lengths, dtype=float)
    w = spec.holding_costs * q
    pressure = w - spec.routing_probs @ w
    return pressure[:, None] * spec.rates


# ---------------------------------------------------------------------------
# Linear assignment with pool capacities (transportation problem)
# ---------------------------------------------------------------------------


def assign(rho, obs: Observation, spec: NetworkSpec):
    """Feasible ActionMatrix maximizing sum(rho * a).

    Constraints: the topology mask, column sums at most pool size, and at
    most Q_i servers on queue i.  Solved as a min-cost flow on the bipartite
    queue/server graph with costs -rho; exact for integer capacities.  On
    exact priority ties the lower (i, j) pair is preferred.
    """
    q = obs.queue_lengths
    m, n = spec.num_queues, spec.num_servers
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (m, n):
        raise ValueError(f"priority matrix shape {rho.shape}, want {(m, n)}")
    edges = []
    topo = spec.topology
    for i in range(m):
        if q[i] <= 0:
            continue
        row = rho[i]
        for j in range(n):
            if topo[i, j] and row[j] > 0.0:
                edges.append((i, j, float(row[j])))
    action = np.zeros((m, n), dtype=np.int64)
    if not edges:
        return action
    if all(len(s) <= 1 for s in spec.queue_servers):
        _greedy_decomposed(edges, q, spec.pools_t, action)
        return action
    _min_cost_flow(edges, q, spec.pools_t, m, n, action)
    return action


def _greedy_decomposed(edges, q, pools, action) -> None:
    # Each queue touches one server class, so columns are independent and a
    # per-column greedy by descending priority (ties: lowest queue) is exact.
    by_server: dict[int, list[tuple[float, int]]] = {}
    for i, j, r in edges:
        by_server.setdefault(j, []).append((-r, i))
    for j, cands in by_server.items():
        cands.sort()
        cap = pools[j]
        for _, i in cands:
            take = min(cap, q[i])
            action[i, j] = take
            cap -= take
            if cap == 0:
                break


def _min_cost_flow(edges, q, pools, m, n, action) -> None:
    # Nodes: 0 source, 1..m queues, m+1..m+n servers, m+n+1 sink.
    source, sink = 0, m + n + 1
    num_nodes = m + n + 2
    to: list[int] = []
    cap: list[int] = []
    cost: list[float] = []
    adj: list[list[int]] = [[] for _ in range(num_nodes)]

    def add_edge(u, v, c, w):
        adj[u].append(len(to))
        to.append(v)
        cap.append(c)
        cost.append(w)
        adj[v].append(len(to))
        to.append(u)
        cap.append(0)
        cost.append(-w)

    seen_q = set()
    seen_s = set()
    mid = {}
    for i, j, r in edges:
        if i not in seen_q:
            seen_q.add(i)
            add_edge(source, 1 + i, int(q[i]), 0.0)
        if j not in seen_s:
            seen_s.add(j)
            add_edge(m + 1 + j, sink, int(pools[j]), 0.0)
        mid[(i, j)] = len(to)
        add_edge(1 + i, m + 1 + j, min(int(q[i]), int(pools[j])), -r)

    # Successive shortest augmenting paths (Bellman-Ford; graphs are tiny).
    # Stop once the best residual path no longer has strictly negative cost:
    # the cost-versus-flow curve is convex, so no better flow value exists.
    while True:
        dist = [math.inf] * num_nodes
        parent_edge = [-1] * num_nodes
        dist[source] = 0.0
        for _ in range(num_nodes - 1):
            improved = False
            for u in range(num_nodes):
                du = dist[u]
                if du == math.inf:
                    continue
                for e in adj[u]:
                    if cap[e] > 0 and du + cost[e] < dist[to[e]]:
                        dist[to[e]] = du + cost[e]
                        parent_edge[to[e]] = e
                        improved = True
            if not improved:
                break
        if dist[sink] >= 0.0:
            break
        bottleneck = None
        v = sink
        while v != source:
            e = parent_edge[v]
            if bottleneck is None or cap[e] < bottleneck:
                bottleneck = cap[e]
            v = to[e ^ 1]
        v = sink
        while v != source:
            e = parent_edge[v]
            cap[e] -= bottleneck
            cap[e ^ 1] += bottleneck
            v = to[e ^ 1]
    for (i, j), e in mid.items():
        flow = cap[e ^ 1]  # residual of the reverse edge = flow sent
        if flow:
            action[i, j] = flow


# ---------------------------------------------------------------------------
# Policy objects
# ---------------------------------------------------------------------------


class PriorityPolicy:
    """Base for policies of the form: score pairs, then linear-assign.

    Subclasses provide ``priorities``; ``action`` is specialised to a pure
    Python fast path on networks where each queue is compatible with a
    single server class (the assignment then decomposes per column).
    """

    name = "priority"

    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        self._fast = spec.single_server_per_queue

    def priorities(self, spec: NetworkSpec, obs: Observation) -> np.ndarray:
        raise NotImplementedError

    def action(self, spec: NetworkSpec, obs: Observation, rng=None):
        return assign(self.priorities(spec, obs), obs, spec)


class CmuPolicy(PriorityPolicy):
    name = "cmu"

    def __init__(self, spec: NetworkSpec):
        super().__init__(spec)
        self._rho = priority_cmu(spec, Observation(0.0, (0,) * spec.num_queues))
        # Static per-server service order: by descending c*mu, then queue index.
        self._order = []
        for j in range(spec.num_servers):
            cands = [
                (-self._rho[i, j], i)
                for i in spec.server_queues[j]
                if self._rho[i, j] > 0.0
            ]
            cands.sort()
            self._order.append([i for _, i in cands])

    def priorities(self, spec, obs):
        return self._rho

    def action(self, spec, obs, rng=None):
        if not self._fast:
            return assign(self._rho, obs, spec)
        q = obs.queue_lengths
        a = [[0] * spec.num_servers for _ in range(spec.num_queues)]
        pools = spec.pools_t
        for j, order in enumerate(self._order):
            cap = pools[j]
            for i in order:
                qi = q[i]
                if qi:
                    take = qi if qi < cap else cap
                    a[i][j] = take
                    cap -= take
                    if not cap:
                        break
        return a


class MaxWeightPolicy(PriorityPolicy):
    name = "maxweight"

    def priorities(self, spec, obs):
        return priority_maxweight(spec, obs)

    def action(self, spec, obs, rng=None):
        if not self._fast:
            return assign(self.priorities(spec, obs), obs, spec)
        q = obs.queue_lengths
        costs = spec.costs_t
        rates = spec.rates_t
        a = [[0] * spec.num_servers for _ in range(spec.num_queues)]
        pools = spec.pools_t
        for j in range(spec.num_servers):
            cands = []
            for i in spec.server_queues[j]:
                qi = q[i]
                if qi:
                    cands.append((-costs[i] * qi * rates[i][j], i, qi))
            if not cands:
                continue
            if len(cands) > 1:
                cands.sort()
            cap = pools[j]
            for _, i, qi in cands:
                take = qi if qi < cap else cap
                a[i][j] = take
                cap -= take
                if not cap:
                    break
        return a


class MaxPressurePolicy(PriorityPolicy):
    name = "maxpressure"

    def priorities(self, spec, obs):
        return priority_maxpressure(spec, obs)

    def action(self, spec, obs, rng=None):
        if not self._fast:
            return assign(self.priorities(spec, obs), obs, spec)
        q = obs.queue_lengths
        costs = spec.costs_t
        rates = spec.rates_t
        targets = spec.routing_target
        a = [[0] * spec.num_servers for _ in range(spec.num_queues)]
        pools = spec.pools_t
        for j in range(spec.num_servers):
            cands = []
            for i in spec.server_queues[j]:
                qi = q[i]
                if qi:
                    t = targets[i]
                    pressure = costs[i] * qi
                    if t is not None:
                        pressure -= costs[t] * q[t]
                    if pressure > 0.0:
                        cands.append((-pressure * rates[i][j], i, qi))
            if not cands:
                continue
            if len(cands) > 1:
                cands.sort()
            cap = pools[j]
            for _, i, qi in cands:
                take = qi if qi < cap else cap
                a[i][j] = take
                cap -= take
                if not cap:
                    break
        return a


class RandomPolicy:
    """Each server unit picks uniformly among its nonempty queues or idles."""

    name = "random"

    def __init__(self, spec: NetworkSpec):
        self.spec = spec

    def action(self, spec: NetworkSpec, obs: Observation, rng=None):
        if rng is None:
            raise ValueError("random policy needs an rng stream")
        remaining = list(obs.queue_lengths)
        a = [[0] * spec.num_servers for _ in range(spec.num_queues)]
        for j in range(spec.num_servers):
            compat = spec.server_queues[j]
            for _ in range(spec.pools_t[j]):
                open_queues = [i for i in compat if remaining[i] > 0]
                idx = rng.randrange(len(open_queues) + 1)  # last slot = idle
                if idx < len(open_queues):
                    i = open_queues[idx]
                    a[i][j] += 1
                    remaining[i] -= 1
        return a
