"""Build the extensive form, the per-scenario recourse LP and the bundle subproblems.

Column layout: design columns come first in canonical arc order (see
:meth:`Instance.arc_index`), followed by per-scenario flow and outsourcing
columns. Flow columns exist only for arcs inside a commodity's time window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import milp
from .errors import InternalModelError, ModelBuildError
from .milp import EQ, GE, LE, LinearProgram, LPBuilder, Status
from .network import Instance, check_commodity_paths, next_period
from .scenarios import ScenarioSet

PROXIMAL_SEGMENTS = 20  # breakpoints per side of xbar


@dataclass
class VariableIndex:
    design: np.ndarray
    flow: dict[tuple[int, int, int], int] = field(default_factory=dict)  # (arc, k, s) -> col
    outsource: dict[tuple[int, int], int] = field(default_factory=dict)  # (k, s) -> col


@dataclass
class SubproblemSpec:
    """One bundle's subproblem data.

    ``penalty=None`` drops the proximal term (the initial PHA pass). With
    ``relax`` the design columns are continuous and the proximal term is
    represented piecewise linearly instead of by the binary identity x*x = x.
    """

    scenarios: list[int]
    bundle_prob: float
    scenario_q: np.ndarray
    duals: np.ndarray | None = None
    consensus: np.ndarray | None = None
    penalty: float | None = None
    relax: bool = False

    def __post_init__(self) -> None:
        self.scenario_q = np.asarray(self.scenario_q, dtype=float)
        if self.scenario_q.shape != (len(self.scenarios),):
            raise ValueError("one reweighted probability per bundle scenario required")
        if self.penalty is not None:
            if not self.penalty > 0:
                raise ValueError(f"penalty must be positive, got {self.penalty}")
            if self.consensus is None:
                raise ValueError("a proximal term needs the consensus design")
        if self.consensus is not None:
            self.consensus = np.asarray(self.consensus, dtype=float)
            if np.any(self.consensus < -1e-12) or np.any(self.consensus > 1 + 1e-12):
                raise ValueError("consensus entries must lie in [0, 1]")


class _Structure:
    """Per-instance incidence data shared by all scenario blocks."""

    def __init__(self, inst: Instance) -> None:
        check_commodity_paths(inst)
        N, T = inst.num_terminals, inst.horizon
        self.inst = inst
        self.allowed: list[list[int]] = []
        for k in range(inst.num_commodities):
            window = inst.commodities[k].window(T)
            self.allowed.append([inst.arc_index(i, j, t) for t in window for i in range(N) for j in range(N)])
        self.holding = np.array([inst.arc_of(a)[0] == inst.arc_of(a)[1] for a in range(inst.num_arcs)])

    def node_rows(self, k: int) -> dict[tuple[int, int], list[tuple[int, float]]]:
        """Arc incidence per space-time node for commodity ``k``: (arc, +1 out / -1 in)."""
        inst = self.inst
        T = inst.horizon
        nodes: dict[tuple[int, int], list[tuple[int, float]]] = {}
        for a in self.allowed[k]:
            i, j, t = inst.arc_of(a)
            dep = (t - 1) % T
            nodes.setdefault((i, dep), []).append((a, 1.0))
            nodes.setdefault((j, t), []).append((a, -1.0))
        com = inst.commodities[k]
        nodes.setdefault((com.origin, com.avail_period), [])
        nodes.setdefault((com.destination, com.deadline), [])
        return nodes


def _add_design_balance(b: LPBuilder, inst: Instance, design_cols: np.ndarray) -> None:
    N, T = inst.num_terminals, inst.horizon
    for t in range(T):
        nt = next_period(t, T)
        for i in range(N):
            terms = [(int(design_cols[inst.arc_index(j, i, t)]), 1.0) for j in range(N)]
            terms += [(int(design_cols[inst.arc_index(i, j, nt)]), -1.0) for j in range(N)]
            b.add_row(terms, EQ, 0.0)


def _add_scenario_block(
    b: LPBuilder,
    st: _Structure,
    s: int,
    demand: np.ndarray,
    outsource_cost: float,
    idx: VariableIndex,
    design_cols: np.ndarray | None = None,
    design_values: np.ndarray | None = None,
) -> None:
    """Flows, outsourcing, capacity and conservation rows for one scenario.

    Capacity couples to ``design_cols`` when given, else to the fixed
    ``design_values``.
    """
    inst = st.inst
    u = inst.capacity
    on_arc: dict[int, list[int]] = {}
    for k, com in enumerate(inst.commodities):
        for a in st.allowed[k]:
            col = b.add_var(0.0, name=f"y_{a}_{k}_{s}")
            idx.flow[(a, k, s)] = col
            if not st.holding[a]:
                on_arc.setdefault(a, []).append(col)
        z = b.add_var(outsource_cost, name=f"z_{k}_{s}")
        idx.outsource[(k, s)] = z
        supply = (com.origin, com.avail_period)
        sink = (com.destination, com.deadline)
        for node, arcs in st.node_rows(k).items():
            terms = [(idx.flow[(a, k, s)], sign) for a, sign in arcs]
            rhs = 0.0
            if node == supply:
                terms.append((z, 1.0))
                rhs += demand[k]
            if node == sink:
                terms.append((z, -1.0))
                rhs -= demand[k]
            if terms:
                b.add_row(terms, EQ, rhs)
    for a, cols in on_arc.items():
        terms = [(c, 1.0) for c in cols]
        if design_cols is not None:
            terms.append((int(design_cols[a]), -u))
            b.add_row(terms, LE, 0.0)
        else:
            b.add_row(terms, LE, u * float(design_values[a]))


def build_extensive_form(inst: Instance, scens: ScenarioSet, relax: bool = False) -> tuple[LinearProgram, VariableIndex]:
    """Deterministic equivalent: design cost plus expected outsourcing cost."""
    if scens.num_commodities != inst.num_commodities:
        raise ModelBuildError("scenario demand width does not match the commodity count")
    st = _Structure(inst)
    b = LPBuilder()
    costs = inst.arc_costs_vector()
    design = np.array([b.add_var(costs[a], 0.0, 1.0, binary=not relax, name=f"x_{a}")
                       for a in range(inst.num_arcs)])
    idx = VariableIndex(design)
    _add_design_balance(b, inst, design)
    lam = inst.outsourcing_cost
    for s in range(len(scens)):
        _add_scenario_block(b, st, s, scens.demands[s], lam * scens.probabilities[s], idx, design_cols=design)
    return b.build(), idx


def build_recourse_lp(inst: Instance, design: np.ndarray, demand: np.ndarray) -> tuple[LinearProgram, VariableIndex]:
    """Second-stage LP for a fixed design; objective is total outsourced units (no lambda)."""
    design = np.asarray(design, dtype=float)
    if design.shape != (inst.num_arcs,):
        raise ValueError(f"design must have {inst.num_arcs} entries")
    st = _Structure(inst)
    b = LPBuilder()
    idx = VariableIndex(np.array([], dtype=int))
    _add_scenario_block(b, st, 0, np.asarray(demand, float), 1.0, idx, design_values=design)
    return b.build(), idx


def _proximal_segments(b: LPBuilder, col: int, xbar: float, rho: float) -> float:
    """Secant interpolation of (rho/2)(x - xbar)^2 on [0, 1] through bounded segment columns.

    Segment slopes increase, so a minimizer fills them in order and the
    segments sum to the interpolant exactly. Breakpoints sit at xbar +- 2^-k,
    so the relative overestimate stays bounded however close x is to xbar.
    Returns the constant f(0).
    """
    steps = 2.0 ** -np.arange(PROXIMAL_SEGMENTS)
    points = np.concatenate([[0.0, 1.0, xbar], xbar + steps, xbar - steps])
    points = np.unique(points[(points >= 0.0) & (points <= 1.0)])
    f = 0.5 * rho * (points - xbar) ** 2
    terms = [(col, 1.0)]
    for z0, z1, f0, f1 in zip(points[:-1], points[1:], f[:-1], f[1:]):
        seg = b.add_var((f1 - f0) / (z1 - z0), 0.0, z1 - z0)
        terms.append((seg, -1.0))
    b.add_row(terms, EQ, 0.0)
    return float(f[0])


def build_bundle_subproblem(inst: Instance, spec: SubproblemSpec, scens: ScenarioSet) -> tuple[LinearProgram, VariableIndex]:
    """Bundle copy of the design plus the bundle's recourse blocks.

    Objective: ``sum c p_b x + lambda sum_s q_s Z_s + w.x + (rho/2)|x - xbar|^2``.
    For binary designs the square is exact as ``rho (1/2 - xbar) x`` plus the
    constant ``(rho/2) xbar^2`` carried in ``objective_offset``.
    """
    st = _Structure(inst)
    A = inst.num_arcs
    coef = inst.arc_costs_vector() * spec.bundle_prob
    if spec.duals is not None:
        coef = coef + np.asarray(spec.duals, float)
    offset = 0.0
    rho = spec.penalty
    if rho is not None and not spec.relax:
        coef = coef + rho * (0.5 - spec.consensus)
        offset = float(0.5 * rho * np.sum(spec.consensus ** 2))
    b = LPBuilder()
    design = np.array([b.add_var(coef[a], 0.0, 1.0, binary=not spec.relax, name=f"x_{a}") for a in range(A)])
    idx = VariableIndex(design)
    _add_design_balance(b, inst, design)
    lam = inst.outsourcing_cost
    for s, q in zip(spec.scenarios, spec.scenario_q):
        _add_scenario_block(b, st, s, scens.demands[s], lam * q, idx, design_cols=design)
    if rho is not None and spec.relax:
        offset += sum(_proximal_segments(b, int(design[a]), float(spec.consensus[a]), rho) for a in range(A))
    b.offset = offset
    return b.build(), idx


def proximal_linearized(x: np.ndarray, xbar: np.ndarray, rho: float) -> float:
    """The binary-exact linear form of (rho/2)|x - xbar|^2."""
    return float(np.sum(rho * (0.5 - xbar) * x + 0.5 * rho * xbar ** 2))


def design_cost(inst: Instance, x: np.ndarray) -> float:
    return float(inst.arc_costs_vector() @ np.asarray(x, float))


def design_balance_violation(inst: Instance, x: np.ndarray) -> float:
    """Largest in/out vehicle imbalance over all space-time nodes."""
    N, T = inst.num_terminals, inst.horizon
    X = np.asarray(x, float).reshape(T, N, N)  # [t, i, j]
    inflow = X.sum(axis=1)  # arriving at (j, t)
    outflow = np.roll(X, -1, axis=0).sum(axis=2)  # leaving (i, t) arrive at t+1
    return float(np.max(np.abs(inflow - outflow)))


def recourse_value(inst: Instance, design: np.ndarray, demand: np.ndarray, engine: str = "auto") -> float:
    """Minimum outsourced units for ``demand`` under ``design``."""
    lp, _ = build_recourse_lp(inst, design, demand)
    sol = milp.solve(lp, engine=engine)
    if sol.status != Status.OPTIMAL:
        raise InternalModelError(f"recourse LP returned {sol.status.value}")
    return sol.objective


def evaluate_design(inst: Instance, scens: ScenarioSet, design: np.ndarray, engine: str = "auto") -> float:
    """Design cost plus lambda-weighted expected outsourcing."""
    expected = sum(p * recourse_value(inst, design, d, engine) for p, d in zip(scens.probabilities, scens.demands))
    return design_cost(inst, design) + inst.outsourcing_cost * expected
