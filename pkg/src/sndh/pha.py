"""Bundle-decomposed progressive hedging.

Each bundle owns a copy of the first-stage design. An iteration solves every
bundle subproblem, averages the copies with the bundle probabilities, and
moves each bundle's dual by ``rho * (x_b - xbar)``. The run stops once every
copy sits within ``tolerance`` of the average, or when the budget runs out;
in the latter case the average is rounded and repaired into a balanced design.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import milp
from .bundling import BundleSet
from .errors import InternalModelError
from .formulation import (
    SubproblemSpec,
    build_bundle_subproblem,
    design_balance_violation,
    evaluate_design,
)
from .milp import Status
from .network import Instance, next_period
from .scenarios import ScenarioSet

log = logging.getLogger(__name__)

PAPER_RHO_GRID = (0.8, 1.0, 1.3, 1.5, 1.7, 1.9, 2.0)


@dataclass
class PhaConfig:
    penalty: float = 1.0
    tolerance: float = 1e-5
    max_seconds: float = 3 * 3600.0
    max_iterations: int = 500
    subproblem_gap: float = 0.05
    relax_binaries: bool = False
    engine: str = "auto"
    workers: int = 1
    subproblem_node_limit: int = 100_000

    def __post_init__(self) -> None:
        if not self.penalty > 0:
            raise ValueError("penalty must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class IterationRecord:
    iteration: int
    residual: float
    seconds: float
    objective_sum: float


@dataclass
class PhaState:
    iteration: int
    per_bundle_design: np.ndarray  # (B, arcs)
    consensus: np.ndarray
    duals: np.ndarray  # (B, arcs)
    residual: float
    history: list[IterationRecord] = field(default_factory=list)


@dataclass
class PhaResult:
    design: np.ndarray
    objective: float
    iterations: int
    converged: bool
    timed_out: bool
    penalty: float
    seconds: float
    history: list[IterationRecord]
    state: PhaState
    repaired: bool = False


def aggregate(per_bundle_design: np.ndarray, bundle_probs: Sequence[float]) -> np.ndarray:
    """Probability-weighted average of the bundle designs, summed in bundle order."""
    X = np.atleast_2d(np.asarray(per_bundle_design, dtype=float))
    p = np.asarray(bundle_probs, dtype=float)
    if X.shape[0] != p.shape[0]:
        raise ValueError(f"{X.shape[0]} designs but {p.shape[0]} probabilities")
    out = np.zeros(X.shape[1])
    for b in range(X.shape[0]):
        out += p[b] * X[b]
    return out


def dual_update(w_prev: np.ndarray, design: np.ndarray, consensus: np.ndarray, rho: float) -> np.ndarray:
    if not rho > 0:
        raise ValueError("rho must be positive")
    return np.asarray(w_prev, float) + rho * (np.asarray(design, float) - np.asarray(consensus, float))


def residual(per_bundle_design: np.ndarray, consensus: np.ndarray) -> float:
    return float(np.max(np.abs(np.atleast_2d(per_bundle_design) - consensus), initial=0.0))


def repair_balance(inst: Instance, x: np.ndarray) -> np.ndarray:
    """Open arcs until every space-time node has equal vehicle in- and outflow.

    Arcs are only ever opened, so the loop ends; with every arc open the
    design is trivially balanced. Among closed arcs that fix an imbalance the
    cheapest wins, preferring ones whose far end is short the other way.
    """
    N, T = inst.num_terminals, inst.horizon
    x = np.asarray(x, float).round().copy()
    X = x.reshape(T, N, N)
    cost = inst.arc_cost

    def imbalance() -> np.ndarray:
        inflow = X.sum(axis=1)  # [t, node]
        outflow = np.roll(X, -1, axis=0).sum(axis=2)
        return inflow - outflow

    while True:
        gap = imbalance()
        bad = np.argwhere(np.abs(gap) > 0.5)
        if bad.size == 0:
            break
        t, i = (int(v) for v in bad[0])
        if gap[t, i] > 0:
            # surplus at (i, t): open an arc leaving i that arrives at t+1
            nt = next_period(t, T)
            options = [(gap[nt, j] >= 0, cost[i, j], j) for j in range(N) if X[nt, i, j] < 0.5]
            _, _, j = min(options)
            X[nt, i, j] = 1.0
        else:
            # deficit at (i, t): open an arc from some j arriving at (i, t)
            pt = (t - 1) % T
            options = [(gap[pt, j] <= 0, cost[j, i], j) for j in range(N) if X[t, j, i] < 0.5]
            _, _, j = min(options)
            X[t, j, i] = 1.0
    return X.reshape(-1)


def _solve_bundles(inst, scens, bundles: BundleSet, cfg: PhaConfig, duals, consensus, proximal: bool, deadline: float):
    specs = []
    for b, members in enumerate(bundles.bundles):
        q = bundles.reweighted_prob[members]
        specs.append(SubproblemSpec(
            list(members), float(bundles.bundle_prob[b]), q,
            duals=None if duals is None else duals[b],
            consensus=consensus if proximal else None,
            penalty=cfg.penalty if proximal else None,
            relax=cfg.relax_binaries,
        ))

    def run(spec: SubproblemSpec):
        lp, idx = build_bundle_subproblem(inst, spec, scens)
        remaining = max(deadline - time.perf_counter(), 1.0)
        sol = milp.solve(lp, cfg.subproblem_gap, cfg.subproblem_node_limit, remaining, cfg.engine)
        if not sol.has_solution:
            if sol.status == Status.INFEASIBLE:
                raise InternalModelError("bundle subproblem infeasible")
            return None, float("nan")
        return sol.primal[idx.design], sol.objective

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(run, specs))
    else:
        results = [run(spec) for spec in specs]
    if any(r[0] is None for r in results):
        return None, float("nan")
    designs = np.vstack([r[0] for r in results])
    if not cfg.relax_binaries:
        designs = np.round(designs)
    return designs, float(sum(r[1] for r in results))


def pha_run(inst: Instance, scens: ScenarioSet, bundles: BundleSet, cfg: PhaConfig) -> PhaResult:
    """Progressive hedging over ``bundles``; returns the design and its true cost."""
    if bundles.bundle_prob is None:
        raise ValueError("bundle probabilities missing; run bundle_probabilities first")
    start = time.perf_counter()
    deadline = start + cfg.max_seconds
    B = bundles.num_bundles

    designs, obj_sum = _solve_bundles(inst, scens, bundles, cfg, None, None, False, deadline)
    if designs is None:
        raise InternalModelError("initial bundle solves produced no design within the time budget")
    consensus = np.clip(aggregate(designs, bundles.bundle_prob), 0.0, 1.0)
    duals = np.vstack([dual_update(np.zeros(inst.num_arcs), designs[b], consensus, cfg.penalty) for b in range(B)])
    res = residual(designs, consensus)
    history = [IterationRecord(0, res, time.perf_counter() - start, obj_sum)]
    log.info("pha rho=%g it=0 residual=%.3g", cfg.penalty, res)
    timed_out = False
    iteration = 0
    while res >= cfg.tolerance:
        if iteration >= cfg.max_iterations or time.perf_counter() >= deadline:
            timed_out = True
            break
        iteration += 1
        new_designs, obj_sum = _solve_bundles(inst, scens, bundles, cfg, duals, consensus, True, deadline)
        if new_designs is None:
            timed_out = True
            break
        designs = new_designs
        consensus = np.clip(aggregate(designs, bundles.bundle_prob), 0.0, 1.0)
        duals = np.vstack([dual_update(duals[b], designs[b], consensus, cfg.penalty) for b in range(B)])
        res = residual(designs, consensus)
        history.append(IterationRecord(iteration, res, time.perf_counter() - start, obj_sum))
        log.info("pha rho=%g it=%d residual=%.3g", cfg.penalty, iteration, res)

    converged = res < cfg.tolerance
    repaired = False
    if cfg.relax_binaries:
        design = np.clip(consensus, 0.0, 1.0)
    else:
        # ties at exactly one half round down
        design = (consensus > 0.5).astype(float)
        if design_balance_violation(inst, design) > 0.5:
            design = repair_balance(inst, design)
            repaired = True
    engine = "native" if cfg.engine == "native" else "auto"
    objective = evaluate_design(inst, scens, design, engine)
    state = PhaState(iteration, designs, consensus, duals, res, history)
    return PhaResult(design, objective, len(history), converged, timed_out and not converged, cfg.penalty,
                     time.perf_counter() - start, history, state, repaired)


def penalty_sweep(
    inst: Instance,
    scens: ScenarioSet,
    bundles: BundleSet,
    grid: Sequence[float],
    cfg: PhaConfig | None = None,
) -> tuple[PhaResult, list[PhaResult]]:
    """Run PHA for each distinct penalty; keep the best true objective.

    Ties go to fewer iterations, then the smaller penalty.
    """
    values = list(dict.fromkeys(float(r) for r in grid))
    if not values:
        raise ValueError("penalty grid is empty")
    base = cfg or PhaConfig()
    runs = []
    for rho in values:
        run_cfg = PhaConfig(**{**base.__dict__, "penalty": rho})
        runs.append(pha_run(inst, scens, bundles, run_cfg))
    best = min(runs, key=lambda r: (round(r.objective, 9), r.iterations, r.penalty))
    return best, runs


def write_trace(result: PhaResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "residual", "objective_estimate", "seconds"])
        for rec in result.history:
            w.writerow([rec.iteration, f"{rec.residual:.10g}", f"{rec.objective_sum:.10g}", f"{rec.seconds:.6f}"])
