"""Fluid-model planning: discretized ODE dynamics as a linear program.

The queue process is approximated by fluid levels x[g][i] on a uniform
grid, drained by allocation fractions u[g][i][j] and fed by the arrival
rates and routing.  The first grid cell's allocation doubles as the
priority matrix for the linear-assignment rule (receding horizon), and
the plan is re-solved every ``resolve_every`` engine steps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import Observation
from .lp import LPError, LPTableau, solve_lp
from .network import NetworkSpec
from .policies import assign, priority_maxweight

log = logging.getLogger(__name__)

DEFAULT_GRID = 50
DEFAULT_RESOLVE_EVERY = 1000
GRID_MIN, GRID_MAX = 10, 200


@dataclass
class FluidLP:
    """LP pieces plus the variable indexing needed to read a plan back.

    Variables: u[g][e] for grid cell g and compatible edge e=(i,j), then
    x[g][i] for g = 1..G (x[0] is the observed queue vector, a constant).
    """

    spec: NetworkSpec
    edges: list[tuple[int, int]]
    grid: int
    h: float
    c: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray

    @property
    def num_u(self) -> int:
        return self.grid * len(self.edges)

    def u_index(self, g: int, e: int) -> int:
        return g * len(self.edges) + e

    def x_index(self, g: int, i: int) -> int:
        if g < 1:
            raise IndexError("x[0] is fixed to the observed queue lengths")
        return self.num_u + (g - 1) * self.spec.num_queues + i

    def to_tableau(self) -> LPTableau:
        return LPTableau.from_inequalities(
            self.c, a_ub=self.a_ub, b_ub=self.b_ub, a_eq=self.a_eq, b_eq=self.b_eq
        )


@dataclass
class FluidPlan:
    u0: np.ndarray          # first-cell allocation, (M, N)
    value: float
    levels: np.ndarray      # planned fluid trajectory, (G+1, M)
    grid: int
    h: float


def default_horizon(spec: NetworkSpec, obs: Observation) -> float:
    """Twice the worst-case drain time at the slowest positive rate."""
    max_q = max(obs.queue_lengths, default=0)
    positive = spec.rates[spec.rates > 0]
    min_rate = positive.min() if positive.size else 1.0
    return max(2.0 * max_q / min_rate, 1.0)


def build_fluid_lp(
    spec: NetworkSpec,
    obs: Observation,
    grid: int = DEFAULT_GRID,
    horizon: Optional[float] = None,
) -> FluidLP:
    """Discretize the fluid dynamics on ``grid`` cells over ``horizon``.

    Dynamics per cell: x[g+1] = x[g] + h*(lambda - outflow + routed inflow),
    with x >= 0, allocations nonnegative, and per-class capacity.  The
    objective is the right-endpoint rule sum_g h * c'x[g+1]; x[0] is fixed
    and uncontrollable, so it is left out.
    """
    grid = int(min(max(grid, GRID_MIN), GRID_MAX))
    if horizon is None:
        horizon = default_horizon(spec, obs)
    if horizon <= 0:
        raise ValueError("planning horizon must be positive")
    h = horizon / grid
    m, n = spec.num_queues, spec.num_servers
    edges = [(i, j) for i in range(m) for j in range(n) if spec.topology[i, j]]
    e_count = len(edges)
    num_u = grid * e_count
    num_x = grid * m
    total = num_u + num_x
    lam = np.array([spec.arrival_specs[i].rate_at(obs.clock) for i in range(m)])
    q0 = np.asarray(obs.queue_lengths, dtype=float)

    c = np.zeros(total)
    for g in range(1, grid + 1):
        c[num_u + (g - 1) * m : num_u + g * m] = h * spec.holding_costs

    a_eq = np.zeros((grid * m, total))
    b_eq = np.zeros(grid * m)
    for g in range(grid):
        for i in range(m):
            row = g * m + i
            a_eq[row, num_u + g * m + i] = 1.0  # x[g+1][i]
            if g >= 1:
                a_eq[row, num_u + (g - 1) * m + i] = -1.0  # -x[g][i]
                b_eq[row] = h * lam[i]
            else:
                b_eq[row] = h * lam[i] + q0[i]
            for e, (k, j) in enumerate(edges):
                mu = spec.rates[k, j]
                if k == i:
                    a_eq[row, g * e_count + e] += h * mu
                if spec.routing_target[k] == i:
                    a_eq[row, g * e_count + e] -= h * mu

    a_ub = np.zeros((grid * n, total))
    b_ub = np.zeros(grid * n)
    for g in range(grid):
        for j in range(n):
            row = g * n + j
            b_ub[row] = float(spec.pool_sizes[j])
            for e, (k, jj) in enumerate(edges):
                if jj == j:
                    a_ub[row, g * e_count + e] = 1.0
    return FluidLP(spec, edges, grid, h, c, a_eq, b_eq, a_ub, b_ub)


def solve_fluid(fl: FluidLP) -> FluidPlan:
    solution = solve_lp(fl.to_tableau())
    m = fl.spec.num_queues
    u0 = np.zeros((m, fl.spec.num_servers))
    for e, (i, j) in enumerate(fl.edges):
        u0[i, j] = solution.x[fl.u_index(0, e)]
    levels = np.zeros((fl.grid + 1, m))
    for g in range(1, fl.grid + 1):
        for i in range(m):
            levels[g, i] = solution.x[fl.x_index(g, i)]
    return FluidPlan(u0, solution.value, levels, fl.grid, fl.h)


class FluidPolicy:
    """Receding-horizon fluid plan used as a priority matrix.

    The cached plan is reused between re-solves, so the priorities are
    constant for ``resolve_every`` consecutive steps.  If the LP cannot be
    solved the policy falls back to MaxWeight priorities for that plan
    window and logs a warning.
    """

    name = "fluid"

    def __init__(
        self,
        spec: NetworkSpec,
        grid: int = DEFAULT_GRID,
        horizon: Optional[float] = None,
        resolve_every: int = DEFAULT_RESOLVE_EVERY,
    ):
        self.spec = spec
        self.grid = grid
        self.horizon = horizon
        self.resolve_every = int(resolve_every)
        self._plan: Optional[np.ndarray] = None
        self._steps = 0

    def priorities(self, spec: NetworkSpec, obs: Observation) -> np.ndarray:
        if self._plan is None or self._steps % self.resolve_every == 0:
            self._plan = self._replan(spec, obs)
        self._steps += 1
        return self._plan

    def _replan(self, spec: NetworkSpec, obs: Observation) -> np.ndarray:
        try:
            fl = build_fluid_lp(spec, obs, self.grid, self.horizon)
            return solve_fluid(fl).u0
        except LPError as exc:
            log.warning("fluid plan failed (%s); falling back to maxweight", exc)
            return priority_maxweight(spec, obs)

    def action(self, spec: NetworkSpec, obs: Observation, rng=None):
        return assign(self.priorities(spec, obs), obs, spec)
