"""Exact LP/MILP engine: dense two-phase simplex plus branch-and-bound.

``solve`` picks an engine: the native one for models up to
``NATIVE_MAX_COLUMNS`` columns, HiGHS above that (``engine="auto"``).
"""

from __future__ import annotations

from .bnb import solve_milp
from .highs import solve_highs
from .lpformat import to_lp_text, write_lp
from .model import EQ, GE, LE, LinearProgram, LPBuilder, Solution, Status
from .simplex import solve_lp

NATIVE_MAX_COLUMNS = 400
ENGINES = ("auto", "native", "highs")


def pick_engine(lp: LinearProgram, engine: str = "auto") -> str:
    if engine not in ENGINES:
        raise ValueError(f"engine must be one of {ENGINES}, got {engine!r}")
    if engine == "auto":
        return "native" if lp.num_vars <= NATIVE_MAX_COLUMNS else "highs"
    return engine


def solve(
    lp: LinearProgram,
    rel_gap: float = 0.0,
    node_limit: int = 1_000_000,
    time_limit: float = float("inf"),
    engine: str = "auto",
) -> Solution:
    """Solve ``lp`` as an LP or MILP depending on its binary flags."""
    if pick_engine(lp, engine) == "highs":
        return solve_highs(lp, rel_gap, node_limit, time_limit)
    if lp.is_binary.any():
        return solve_milp(lp, rel_gap, node_limit, time_limit)
    return solve_lp(lp)


__all__ = [
    "EQ", "GE", "LE", "LinearProgram", "LPBuilder", "Solution", "Status",
    "solve", "solve_lp", "solve_milp", "solve_highs", "pick_engine",
    "to_lp_text", "write_lp", "NATIVE_MAX_COLUMNS",
]
