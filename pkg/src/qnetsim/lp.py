"""Dense two-phase primal simplex with Bland's anti-cycling rule.

Problems are stored in standard form: minimize c'x subject to Ax = b,
x >= 0.  Instances here are small (at most a few thousand variables), so
an exact, deterministic dense method beats anything fancier.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-8


class LPError(Exception):
    pass


class Infeasible(LPError):
    pass


class Unbounded(LPError):
    pass


class IterationLimit(LPError):
    pass


class NumericalTrouble(LPError):
    """The computed solution failed the residual check."""


@dataclass
class LPTableau:
    """Standard-form data: minimize c'x, Ax = b, x >= 0.

    ``n_structural`` marks how many leading variables are the caller's own
    (the rest are slacks added by :meth:`from_inequalities`).
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    n_structural: Optional[int] = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        m, n = self.a.shape
        if self.b.shape != (m,) or self.c.shape != (n,):
            raise ValueError("inconsistent LP dimensions")
        if self.n_structural is None:
            self.n_structural = n

    @classmethod
    def from_inequalities(cls, c, a_ub=None, b_ub=None, a_eq=None, b_eq=None):
        """Build standard form from <= and == constraints by adding slacks."""
        c = np.asarray(c, dtype=float)
        n = c.shape[0]
        rows = []
        rhs = []
        n_ub = 0
        if a_ub is not None:
            a_ub = np.atleast_2d(np.asarray(a_ub, dtype=float))
            b_ub = np.atleast_1d(np.asarray(b_ub, dtype=float))
            n_ub = a_ub.shape[0]
            rows.append(a_ub)
            rhs.append(b_ub)
        if a_eq is not None:
            a_eq = np.atleast_2d(np.asarray(a_eq, dtype=float))
            b_eq = np.atleast_1d(np.asarray(b_eq, dtype=float))
            rows.append(a_eq)
            rhs.append(b_eq)
        if not rows:
            raise ValueError("need at least one constraint")
        a_all = np.vstack(rows)
        b_all = np.concatenate(rhs)
        m = a_all.shape[0]
        a_std = np.hstack([a_all, np.zeros((m, n_ub))])
        for k in range(n_ub):
            a_std[k, n + k] = 1.0
        c_std = np.concatenate([c, np.zeros(n_ub)])
        return cls(a_std, b_all, c_std, n_structural=n)


@dataclass
class LPSolution:
    value: float
    x: np.ndarray                      # full standard-form solution
    duals: np.ndarray                  # y with B' y = c_B at the final basis
    basis: list[int]
    iterations: int
    objective_trace: list[float] = field(repr=False, default_factory=list)

    def structural(self, lp: LPTableau) -> np.ndarray:
        return self.x[: lp.n_structural]


def solve_lp(lp: LPTableau, max_iterations: Optional[int] = None) -> LPSolution:
    """Two-phase primal simplex with Bland's rule.

    Raises Infeasible, Unbounded, or IterationLimit; the returned solution
    satisfies ``|Ax - b|_inf <= 1e-8 * (1 + |b|_inf)``.
    """
    a = lp.a.copy()
    b = lp.b.copy()
    c = lp.c.copy()
    m, n = a.shape
    neg = b < 0
    a[neg] *= -1.0
    b[neg] *= -1.0
    if max_iterations is None:
        max_iterations = 200 * (m + n) + 2000

    # Phase 1: artificial basis, minimize the artificial sum.
    tableau = np.zeros((m + 1, n + m + 1))
    tableau[:m, :n] = a
    tableau[:m, n : n + m] = np.eye(m)
    tableau[:m, -1] = b
    tableau[m, :] = -tableau[:m, :].sum(axis=0)
    tableau[m, n : n + m] = 0.0
    basis = list(range(n, n + m))
    trace: list[float] = []
    iters = _pivot_until_optimal(tableau, basis, range(n + m), max_iterations, trace)
    phase1 = -tableau[m, -1]
    if phase1 > FEAS_TOL * (1.0 + abs(b).max(initial=0.0)):
        raise Infeasible(f"phase-1 optimum {phase1:.3g} > 0")

    _drive_out_artificials(tableau, basis, n)
    rows_kept = [r for r, bi in enumerate(basis) if bi < n]
    if len(rows_kept) < len(basis):
        # Redundant original rows: drop them together with their artificials.
        keep = np.array(rows_kept, dtype=int)
        tableau = np.vstack([tableau[keep], tableau[-1:]])
        basis = [basis[r] for r in rows_kept]
        m = len(basis)

    # Phase 2: real objective over the current basis.
    work = np.zeros((m + 1, n + 1))
    work[:m, :n] = tableau[:m, :n]
    work[:m, -1] = tableau[:m, -1]
    work[m, :n] = c
    work[m, -1] = 0.0
    for r, bi in enumerate(basis):
        work[m, :] -= c[bi] * work[r, :]
    trace2: list[float] = []
    iters += _pivot_until_optimal(work, basis, range(n), max_iterations, trace2)

    x = np.zeros(n)
    for r, bi in enumerate(basis):
        x[bi] = work[r, -1]
    value = float(c @ x)

    resid = np.abs(lp.a @ x - lp.b).max(initial=0.0)
    if resid > FEAS_TOL * (1.0 + np.abs(lp.b).max(initial=0.0)):
        raise NumericalTrouble(f"residual {resid:.3g} exceeds tolerance")

    basis_cols = lp.a[:, basis] if len(basis) == lp.a.shape[0] else a[rows_kept][:, basis]
    try:
        duals = np.linalg.solve(basis_cols.T, c[basis])
    except np.linalg.LinAlgError:
        duals = np.linalg.lstsq(basis_cols.T, c[basis], rcond=None)[0]
    return LPSolution(value, x, duals, basis, iters, trace2)


def _pivot_until_optimal(tableau, basis, columns, max_iterations, trace) -> int:
    m = tableau.shape[0] - 1
    cols = list(columns)
    for it in range(max_iterations):
        trace.append(float(-tableau[m, -1]))
        enter = -1
        for j in cols:
            if tableau[m, j] < -PIVOT_TOL:
                enter = j
                break
        if enter < 0:
            return it
        best_ratio = None
        leave = -1
        for r in range(m):
            coef = tableau[r, enter]
            if coef > PIVOT_TOL:
                ratio = tableau[r, -1] / coef
                if (
                    best_ratio is None
                    or ratio < best_ratio - PIVOT_TOL
                    or (abs(ratio - best_ratio) <= PIVOT_TOL and basis[r] < basis[leave])
                ):
                    best_ratio = ratio
                    leave = r
        if leave < 0:
            raise Unbounded(f"column {enter} has no blocking row")
        _pivot(tableau, leave, enter)
        basis[leave] = enter
    raise IterationLimit(f"no optimum within {max_iterations} pivots")


def _pivot(tableau, row, col) -> None:
    tableau[row, :] /= tableau[row, col]
    pivot_row = tableau[row, :]
    for r in range(tableau.shape[0]):
        if r != row:
            factor = tableau[r, col]
            if factor != 0.0:
                tableau[r, :] -= factor * pivot_row


def _drive_out_artificials(tableau, basis, n) -> None:
    m = tableau.shape[0] - 1
    for r in range(m):
        if basis[r] >= n:
            for j in range(n):
                if abs(tableau[r, j]) > PIVOT_TOL:
                    _pivot(tableau, r, j)
                    basis[r] = j
                    break
