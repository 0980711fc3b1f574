"""Problem and result containers for the LP/MILP engine."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "<=", "=", ">="
SENSES = (LE, EQ, GE)


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    GAP_REACHED = "gap_reached"
    LIMIT_REACHED = "limit_reached"


@dataclass
class LinearProgram:
    """``min c.x + offset`` subject to sparse rows and variable bounds.

    The constraint matrix is kept as (row, col, value) triples. Lower bounds
    must be finite; upper bounds may be ``inf``. Binary variables carry
    bounds inside [0, 1].
    """

    costs: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    row_sense: list[str]
    rhs: np.ndarray
    var_lower: np.ndarray
    var_upper: np.ndarray
    is_binary: np.ndarray
    objective_offset: float = 0.0
    var_names: list[str] | None = None

    def __post_init__(self) -> None:
        self.costs = np.asarray(self.costs, dtype=float)
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.vals = np.asarray(self.vals, dtype=float)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.var_lower = np.asarray(self.var_lower, dtype=float)
        self.var_upper = np.asarray(self.var_upper, dtype=float)
        self.is_binary = np.asarray(self.is_binary, dtype=bool)
        self.row_sense = list(self.row_sense)

    @property
    def num_vars(self) -> int:
        return self.costs.shape[0]

    @property
    def num_rows(self) -> int:
        return self.rhs.shape[0]

    def validate(self) -> None:
        n, m = self.num_vars, self.num_rows
        for name in ("var_lower", "var_upper", "is_binary"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have length {n}")
        if len(self.row_sense) != m:
            raise ValueError("one sense per row required")
        if any(s not in SENSES for s in self.row_sense):
            raise ValueError(f"row senses must be among {SENSES}")
        if not (self.rows.shape == self.cols.shape == self.vals.shape):
            raise ValueError("triple arrays must have equal length")
        if self.rows.size:
            if self.rows.min() < 0 or self.rows.max() >= m or self.cols.min() < 0 or self.cols.max() >= n:
                raise ValueError("matrix index out of range")
            keys = self.rows * n + self.cols
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate (row, col) entries")
        if not np.all(np.isfinite(self.costs)):
            raise ValueError("costs must be finite")
        if not np.all(np.isfinite(self.var_lower)):
            raise ValueError("lower bounds must be finite")
        if np.any(self.var_upper < self.var_lower - 1e-12):
            raise ValueError("upper bound below lower bound")
        b = self.is_binary
        if np.any(self.var_lower[b] < 0) or np.any(self.var_upper[b] > 1):
            raise ValueError("binary variables need bounds inside [0, 1]")

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.num_rows, self.num_vars))

    def dense(self) -> np.ndarray:
        A = np.zeros((self.num_rows, self.num_vars))
        A[self.rows, self.cols] = self.vals
        return A

    def objective(self, x: np.ndarray) -> float:
        return float(self.costs @ x) + self.objective_offset

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "LinearProgram":
        return replace(self, var_lower=np.asarray(lower, float), var_upper=np.asarray(upper, float))

    def relaxed(self) -> "LinearProgram":
        return replace(self, is_binary=np.zeros(self.num_vars, dtype=bool))

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint or bound violation at ``x``."""
        diff = self.matrix() @ x - self.rhs
        sense = np.array(self.row_sense)
        row_viol = np.where(sense == LE, diff, np.where(sense == GE, -diff, np.abs(diff)))
        viol = max(float(np.max(row_viol, initial=0.0)), float(np.max(self.var_lower - x, initial=0.0)))
        fin = np.isfinite(self.var_upper)
        viol = max(viol, float(np.max(x[fin] - self.var_upper[fin], initial=0.0)))
        return viol


@dataclass
class Solution:
    status: Status
    primal: np.ndarray | None = None
    objective: float = float("nan")
    gap: float = float("nan")
    nodes_explored: int = 0
    best_bound: float = float("nan")
    pivots: int = 0
    history: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def has_solution(self) -> bool:
        return self.primal is not None


class LPBuilder:
    """Incremental assembly of a :class:`LinearProgram`."""

    def __init__(self) -> None:
        self.costs: list[float] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.binary: list[bool] = []
        self.names: list[str] = []
        self.r: list[int] = []
        self.c: list[int] = []
        self.v: list[float] = []
        self.sense: list[str] = []
        self.rhs: list[float] = []
        self.offset = 0.0

    def add_var(self, cost: float = 0.0, lower: float = 0.0, upper: float = np.inf,
                binary: bool = False, name: str | None = None) -> int:
        self.costs.append(float(cost))
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.binary.append(bool(binary))
        self.names.append(name or f"x{len(self.costs) - 1}")
        return len(self.costs) - 1

    def add_row(self, terms: Iterable[tuple[int, float]], sense: str, rhs: float) -> int:
        row = len(self.rhs)
        merged: dict[int, float] = {}
        for col, val in terms:
            merged[col] = merged.get(col, 0.0) + float(val)
        for col, val in merged.items():
            if val != 0.0:
                self.r.append(row)
                self.c.append(col)
                self.v.append(val)
        self.sense.append(sense)
        self.rhs.append(float(rhs))
        return row

    def build(self) -> LinearProgram:
        lp = LinearProgram(
            costs=np.array(self.costs), rows=np.array(self.r, dtype=np.int64),
            cols=np.array(self.c, dtype=np.int64), vals=np.array(self.v),
            row_sense=self.sense, rhs=np.array(self.rhs), var_lower=np.array(self.lower),
            var_upper=np.array(self.upper), is_binary=np.array(self.binary, dtype=bool),
            objective_offset=self.offset, var_names=self.names,
        )
        lp.validate()
        return lp
