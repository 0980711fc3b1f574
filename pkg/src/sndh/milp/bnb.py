"""Branch-and-bound over binary variables with simplex relaxations."""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import LinearProgram, Solution, Status
from .simplex import solve_lp

INT_TOL = 1e-6
ABS_PRUNE = 1e-9


@dataclass
class _Node:
    lower: np.ndarray
    upper: np.ndarray
    bound: float
    depth: int
    seq: int


def _relative_gap(incumbent: float, bound: float) -> float:
    return (incumbent - bound) / max(1e-10, abs(incumbent))


def solve_milp(
    lp: LinearProgram,
    rel_gap: float = 0.0,
    node_limit: int = 1_000_000,
    time_limit: float = float("inf"),
    lp_solver: Callable[[LinearProgram], Solution] = solve_lp,
) -> Solution:
    """Minimize ``lp`` with its binary variables enforced.

    Nodes are explored depth-first until the first incumbent, best-first
    afterwards. Branching picks the most fractional binary (lowest index on
    ties). The search stops once the relative gap
    ``(incumbent - bound) / max(1e-10, |incumbent|)`` is at most ``rel_gap``.
    """
    if rel_gap < 0:
        raise ValueError("rel_gap must be non-negative")
    lp.validate()
    binaries = np.flatnonzero(lp.is_binary)
    if binaries.size == 0:
        return lp_solver(lp)

    start = time.perf_counter()
    seq = itertools.count()
    root = lp_solver(lp)
    if root.status != Status.OPTIMAL:
        return Solution(root.status, nodes_explored=1)

    incumbent: Solution | None = None
    history: list[tuple[int, float, float]] = []
    stack: list[_Node] = []
    heap: list[tuple[float, int, _Node]] = []
    nodes = 0
    best_bound = root.objective

    def open_bounds() -> list[float]:
        return [n.bound for n in stack] + [h[0] for h in heap]

    def try_incumbent(sol: Solution, lower: np.ndarray, upper: np.ndarray) -> None:
        nonlocal incumbent
        # snap binaries exactly and re-solve for consistent continuous values
        snapped = np.round(sol.primal[binaries])
        lo, up = lower.copy(), upper.copy()
        lo[binaries] = snapped
        up[binaries] = snapped
        fixed = lp_solver(lp.with_bounds(lo, up))
        if fixed.status != Status.OPTIMAL:
            return
        if incumbent is None or fixed.objective < incumbent.objective - ABS_PRUNE:
            incumbent = fixed

    def pruned(bound: float) -> bool:
        if incumbent is None:
            return False
        return bound >= incumbent.objective - max(ABS_PRUNE, rel_gap * abs(incumbent.objective))

    def branch(node_lp: Solution, lower: np.ndarray, upper: np.ndarray, depth: int) -> None:
        x = node_lp.primal[binaries]
        frac = np.abs(x - np.round(x))
        if np.all(frac <= INT_TOL):
            try_incumbent(node_lp, lower, upper)
            return
        closeness = np.where(frac > INT_TOL, 0.5 - np.abs(x - np.floor(x) - 0.5), -1.0)
        k = int(np.argmax(closeness))
        var = binaries[k]
        children = []
        for value in (0.0, 1.0):
            lo, up = lower.copy(), upper.copy()
            lo[var] = up[var] = value
            children.append(_Node(lo, up, node_lp.objective, depth + 1, next(seq)))
        preferred = 1 if x[k] >= 0.5 else 0
        if incumbent is None:
            stack.append(children[1 - preferred])
            stack.append(children[preferred])
        else:
            for child in children:
                heapq.heappush(heap, (child.bound, child.seq, child))

    nodes = 1
    history.append((nodes, best_bound, float("inf")))
    branch(root, lp.var_lower.copy(), lp.var_upper.copy(), 0)

    status = Status.OPTIMAL
    while stack or heap:
        if incumbent is not None and stack:
            for node in stack:
                heapq.heappush(heap, (node.bound, node.seq, node))
            stack.clear()
        bounds = open_bounds()
        best_bound = max(best_bound, min(bounds))
        if incumbent is not None:
            gap = _relative_gap(incumbent.objective, best_bound)
            if gap <= rel_gap:
                status = Status.OPTIMAL if gap <= 1e-9 else Status.GAP_REACHED
                break
        if nodes >= node_limit or time.perf_counter() - start > time_limit:
            status = Status.LIMIT_REACHED
            break
        node = stack.pop() if stack else heapq.heappop(heap)[2]
        if pruned(node.bound):
            continue
        sol = lp_solver(lp.with_bounds(node.lower, node.upper))
        nodes += 1
        if sol.status == Status.INFEASIBLE:
            continue
        if sol.status != Status.OPTIMAL:
            status = Status.LIMIT_REACHED if sol.status == Status.LIMIT_REACHED else sol.status
            break
        bound = max(sol.objective, node.bound)
        history.append((nodes, best_bound, incumbent.objective if incumbent else float("inf")))
        if pruned(bound):
            continue
        sol.objective = bound
        branch(sol, node.lower, node.upper, node.depth)

    if incumbent is None:
        if status == Status.OPTIMAL:
            return Solution(Status.INFEASIBLE, nodes_explored=nodes, history=history)
        return Solution(status, nodes_explored=nodes, best_bound=best_bound, history=history)
    best_bound = incumbent.objective if status == Status.OPTIMAL else min(best_bound, incumbent.objective)
    history.append((nodes, best_bound, incumbent.objective))
    return Solution(
        status,
        incumbent.primal,
        incumbent.objective,
        _relative_gap(incumbent.objective, best_bound),
        nodes,
        best_bound,
        history=history,
    )
