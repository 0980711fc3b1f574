"""HiGHS (via scipy) behind the same LinearProgram/Solution contract.

Used for models too large for the dense tableau engine.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .model import EQ, GE, LE, LinearProgram, Solution, Status


def solve_highs(
    lp: LinearProgram,
    rel_gap: float = 0.0,
    node_limit: int | None = None,
    time_limit: float | None = None,
) -> Solution:
    lp.validate()
    sense = np.array(lp.row_sense)
    lo = np.where(sense == LE, -np.inf, lp.rhs)
    hi = np.where(sense == GE, np.inf, lp.rhs)
    options: dict = {"mip_rel_gap": float(rel_gap), "presolve": True}
    if time_limit is not None and np.isfinite(time_limit):
        options["time_limit"] = max(float(time_limit), 0.01)
    if node_limit is not None:
        options["node_limit"] = int(node_limit)
    constraints = [LinearConstraint(lp.matrix(), lo, hi)] if lp.num_rows else []
    res = milp(
        lp.costs,
        integrality=lp.is_binary.astype(int),
        bounds=Bounds(lp.var_lower, lp.var_upper),
        constraints=constraints,
        options=options,
    )
    x = None if res.x is None else np.asarray(res.x, dtype=float)
    if x is not None:
        b = lp.is_binary
        x[b] = np.round(x[b])
    if res.status == 0:
        has_int = bool(lp.is_binary.any())
        gap = float(getattr(res, "mip_gap", 0.0) or 0.0) if has_int else 0.0
        status = Status.OPTIMAL if gap <= 1e-9 else Status.GAP_REACHED
        bound = float(getattr(res, "mip_dual_bound", res.fun) or res.fun) + lp.objective_offset
        return Solution(status, x, lp.objective(x), gap, int(getattr(res, "mip_node_count", 0) or 0), bound)
    if res.status == 2:
        return Solution(Status.INFEASIBLE)
    if res.status == 3:
        return Solution(Status.UNBOUNDED)
    if x is not None:
        return Solution(Status.LIMIT_REACHED, x, lp.objective(x))
    return Solution(Status.LIMIT_REACHED)
