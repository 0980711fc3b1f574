"""Two-phase primal simplex on a dense bounded-variable tableau.

Nonbasic variables sit at either bound, so finite upper bounds (binaries in
particular) never turn into extra rows. Pricing is Dantzig's largest reduced
cost; after a run of degenerate pivots it switches to Bland's smallest-index
rule until the objective moves again.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .model import EQ, GE, LE, LinearProgram, Solution, Status

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
REFRESH_EVERY = 500


class _Tableau:
    def __init__(self, A: np.ndarray, b: np.ndarray, ub: np.ndarray, basis: np.ndarray,
                 enterable: np.ndarray) -> None:
        m, N = A.shape
        self.A, self.b = A, b
        self.m, self.N = m, N
        self.T = np.zeros((m + 1, N + 1))
        self.T[1:, :N] = A
        self.T[1:, N] = b
        self.ub = ub
        self.basis = basis.copy()
        self.enterable = enterable
        self.at_upper = np.zeros(N, dtype=bool)
        self.is_basic = np.zeros(N, dtype=bool)
        self.is_basic[self.basis] = True
        self.beta = b.copy()
        self.costs = np.zeros(N)
        self.pivots = 0

    def set_costs(self, costs: np.ndarray) -> None:
        self.costs = costs
        self.T[0, :self.N] = costs - costs[self.basis] @ self.T[1:, :self.N]

    def refresh(self) -> None:
        """Recompute the tableau from the original matrix and the current basis."""
        # basis matrices of network models are very sparse; factor them that way
        B = sp.csc_matrix(self.A[:, self.basis])
        try:
            sol = splu(B).solve(np.hstack([self.A, self.b[:, None]]))
        except RuntimeError:
            return
        self.T[1:] = sol
        self.set_costs(self.costs)
        up = np.flatnonzero(self.at_upper)
        self.beta = self.T[1:, self.N] - self.T[1:, up] @ self.ub[up]

    def pivot(self, r: int, j: int) -> None:
        T = self.T
        T[r + 1] /= T[r + 1, j]
        col = T[:, j]
        hit = np.flatnonzero(col)
        hit = hit[hit != r + 1]
        if hit.size:
            prow = T[r + 1]
            nz = np.flatnonzero(prow)
            T[np.ix_(hit, nz)] -= np.outer(col[hit], prow[nz])
        leaving = self.basis[r]
        self.is_basic[leaving] = False
        self.is_basic[j] = True
        self.basis[r] = j
        self.pivots += 1
        if self.pivots % REFRESH_EVERY == 0:
            self.refresh()

    def drop_row(self, r: int) -> None:
        """Remove basis position ``r``, held by an artificial, and its original row."""
        art = self.basis[r]
        orig = int(np.flatnonzero(self.A[:, art])[0])
        self.is_basic[art] = False
        self.T = np.delete(self.T, r + 1, axis=0)
        self.A = np.delete(self.A, orig, axis=0)
        self.b = np.delete(self.b, orig)
        self.basis = np.delete(self.basis, r)
        self.beta = np.delete(self.beta, r)
        self.m -= 1

    def iterate(self, max_pivots: int, stall_limit: int) -> Status:
        N = self.N
        stall = 0
        while True:
            if self.pivots >= max_pivots:
                return Status.LIMIT_REACHED
            d = self.T[0, :N]
            cand_lo = self.enterable & ~self.is_basic & ~self.at_upper & (d < -OPT_TOL)
            cand_up = self.enterable & ~self.is_basic & self.at_upper & (d > OPT_TOL)
            eligible = cand_lo | cand_up
            if not eligible.any():
                return Status.OPTIMAL
            bland = stall >= stall_limit
            if bland:
                j = int(np.flatnonzero(eligible)[0])
            else:
                j = int(np.argmax(np.where(eligible, np.abs(d), -1.0)))
            direction = -1.0 if self.at_upper[j] else 1.0
            alpha = direction * self.T[1:, j]
            ub_basic = self.ub[self.basis]

            limits = np.full(self.m, np.inf)
            pos = alpha > PIVOT_TOL
            limits[pos] = np.maximum(self.beta[pos], 0.0) / alpha[pos]
            neg = (alpha < -PIVOT_TOL) & np.isfinite(ub_basic)
            limits[neg] = np.maximum(ub_basic[neg] - self.beta[neg], 0.0) / -alpha[neg]
            theta_row = limits.min() if self.m else np.inf
            theta_flip = self.ub[j]

            if theta_flip <= theta_row:
                if not np.isfinite(theta_flip):
                    return Status.UNBOUNDED
                theta = theta_flip
                self.beta -= theta * alpha
                self.at_upper[j] = not self.at_upper[j]
                self.pivots += 1
            else:
                if not np.isfinite(theta_row):
                    return Status.UNBOUNDED
                theta = theta_row
                ties = np.flatnonzero(limits <= theta + 1e-12)
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(alpha[ties]))])
                leaving = self.basis[r]
                self.beta -= theta * alpha
                self.at_upper[leaving] = alpha[r] < 0
                entering_value = theta if direction > 0 else self.ub[j] - theta
                self.at_upper[j] = False
                self.pivot(r, j)
                if self.pivots % REFRESH_EVERY:
                    self.beta[r] = entering_value
            stall = stall + 1 if theta * np.max(np.abs(d[j]), initial=0.0) <= 1e-12 else 0

    def values(self) -> np.ndarray:
        x = np.zeros(self.N)
        x[self.at_upper] = self.ub[self.at_upper]
        x[self.basis] = self.beta
        return x


def _trivial(lp: LinearProgram, c: np.ndarray, span: np.ndarray, lower: np.ndarray) -> Solution:
    x = lower.copy()
    neg = c < -OPT_TOL
    if np.any(neg & ~np.isfinite(span)):
        return Solution(Status.UNBOUNDED)
    x[neg] += span[neg]
    return Solution(Status.OPTIMAL, x, lp.objective(x), 0.0)


def solve_lp(lp: LinearProgram, max_pivots: int | None = None, stall_limit: int = 50) -> Solution:
    """Solve the continuous relaxation of ``lp`` (binary flags are ignored).

    Infeasibility, unboundedness and pivot limits come back as a status,
    never as exceptions.
    """
    lp.validate()
    n = lp.num_vars
    lower, upper = lp.var_lower, lp.var_upper
    A_full = lp.dense()
    b = lp.rhs - A_full @ lower
    span = upper - lower
    keep = span > 1e-12
    A = A_full[:, keep]
    c = lp.costs[keep]
    ub_struct = span[keep]
    sense = np.array(lp.row_sense)

    scale = max(1.0, float(np.max(np.abs(b), initial=0.0)))
    live = np.any(A != 0.0, axis=1)
    dead_b, dead_s = b[~live], sense[~live]
    if (np.any((dead_s == LE) & (dead_b < -FEAS_TOL * scale))
            or np.any((dead_s == GE) & (dead_b > FEAS_TOL * scale))
            or np.any((dead_s == EQ) & (np.abs(dead_b) > FEAS_TOL * scale))):
        return Solution(Status.INFEASIBLE)
    A, b, sense = A[live], b[live], sense[live]
    m, nk = A.shape

    x_full = lower.copy()
    if m == 0:
        sol = _trivial(lp, lp.costs, np.where(keep, span, 0.0), lower)
        return sol

    slack_rows = np.flatnonzero(sense != EQ)
    S = np.zeros((m, slack_rows.size))
    S[slack_rows, np.arange(slack_rows.size)] = np.where(sense[slack_rows] == LE, 1.0, -1.0)
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    S = S * sign[:, None]
    b = b * sign

    basis = np.full(m, -1)
    for col in range(slack_rows.size):
        r = slack_rows[col]
        if S[r, col] > 0:
            basis[r] = nk + col
    art_rows = np.flatnonzero(basis < 0)
    Art = np.zeros((m, art_rows.size))
    Art[art_rows, np.arange(art_rows.size)] = 1.0
    n_slack = slack_rows.size
    first_art = nk + n_slack
    basis[art_rows] = first_art + np.arange(art_rows.size)

    big = np.hstack([A, S, Art])
    N = big.shape[1]
    ub = np.concatenate([ub_struct, np.full(n_slack + art_rows.size, np.inf)])
    enterable = np.zeros(N, dtype=bool)
    enterable[:first_art] = True
    tab = _Tableau(big, b, ub, basis, enterable)
    limit = max_pivots if max_pivots is not None else max(5000, 50 * (m + N))

    if art_rows.size:
        phase1 = np.zeros(N)
        phase1[first_art:] = 1.0
        tab.set_costs(phase1)
        status = tab.iterate(limit, stall_limit)
        if status == Status.LIMIT_REACHED:
            return Solution(Status.LIMIT_REACHED, pivots=tab.pivots)
        tab.refresh()
        infeas = float(np.sum(tab.values()[first_art:]))
        if infeas > FEAS_TOL * scale:
            return Solution(Status.INFEASIBLE, pivots=tab.pivots)
        # drive zero-valued artificials out of the basis or drop their redundant rows
        r = 0
        while r < tab.m:
            if tab.basis[r] >= first_art:
                row = tab.T[r + 1, :first_art]
                cand = np.flatnonzero((np.abs(row) > PIVOT_TOL) & ~tab.is_basic[:first_art])
                if cand.size:
                    j = int(cand[np.argmax(np.abs(row[cand]))])
                    value = tab.ub[j] if tab.at_upper[j] else 0.0
                    tab.at_upper[j] = False
                    tab.pivot(r, j)
                    tab.beta[r] = value
                else:
                    tab.drop_row(r)
                    continue
            r += 1
        tab.refresh()

    phase2 = np.zeros(N)
    phase2[:nk] = c
    tab.set_costs(phase2)
    status = tab.iterate(limit, stall_limit)
    if status != Status.OPTIMAL:
        return Solution(status, pivots=tab.pivots)
    tab.refresh()
    vals = tab.values()[:nk]
    vals = np.clip(vals, 0.0, ub_struct)
    x_full[keep] += vals
    return Solution(Status.OPTIMAL, x_full, lp.objective(x_full), 0.0, pivots=tab.pivots)
