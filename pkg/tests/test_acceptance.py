"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances and budgets are the ones the criteria state; none are relaxed here.
"""

import csv
import time

import numpy as np
import pytest

from acceptance_log import record
from oracles import (
    binary_enumeration,
    random_balanced_design,
    random_binary_program,
    random_feasible_lp,
    vertex_enumeration,
)
from sndh.bundling import (
    FcmConfig,
    FuzzyPartition,
    assign_bundles,
    bundle_probabilities,
    bundle_scenarios,
    fcm_fit,
    fcm_objective,
    overlap_stats,
    update_centers,
    update_memberships,
)
from sndh.experiment import ExperimentConfig, all_cells_complete, run_experiment
from sndh.formulation import (
    SubproblemSpec,
    build_bundle_subproblem,
    build_extensive_form,
    build_recourse_lp,
    design_balance_violation,
)
from sndh.milp import Status, solve, solve_lp, solve_milp
from sndh.network import generate_instance
from sndh.pha import PAPER_RHO_GRID, PhaConfig, pha_run, penalty_sweep
from sndh.scenarios import generate_scenario_set

# relaxed-mode penalty: sized to the arc costs (10..30) rather than the binary grid
CONVEX_PENALTY = 20.0


def tiny():
    """3 terminals, 3 periods, 2 commodities, 4 scenarios in two disjoint bundles."""
    inst = generate_instance(3, 3, 2, seed=0)
    scens = generate_scenario_set(inst, 4, seed=0)
    return inst, scens, [[0, 1], [2, 3]]


def fix_design(lp, idx, x):
    lo, hi = lp.var_lower.copy(), lp.var_upper.copy()
    lo[idx.design] = x
    hi[idx.design] = x
    return lp.with_bounds(lo, hi)


def balanced_designs(inst, count, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        x = random_balanced_design(inst, rng)
        if design_balance_violation(inst, x) < 0.5:
            out.append(x)
    return out


def fcm_runs():
    rng = np.random.default_rng(2024)
    for run in range(50):
        n = int(rng.integers(10, 151))
        g = int(rng.integers(2, 8))
        m = float(rng.choice([1.5, 2.0]))
        scens = generate_scenario_set(6, n, seed=1000 + run)
        cfg = FcmConfig(g, exponent=m, seed=run)
        yield scens, cfg, fcm_fit(scens, cfg)


def test_criterion_01_fcm_invariants():
    t0 = time.perf_counter()
    failures = []
    for k, (scens, cfg, part) in enumerate(fcm_runs()):
        U, X, m = part.membership, scens.demands, cfg.exponent
        if np.max(np.abs(U.sum(axis=1) - 1.0)) > 1e-9:
            failures.append(f"run {k}: row sums")
        if any(b > a + 1e-9 for a, b in zip(part.history, part.history[1:])):
            failures.append(f"run {k}: J increased")
        V = update_centers(X, U, m)
        J2 = fcm_objective(FuzzyPartition(update_memberships(X, V, m), V, 0.0, 0), X, m)
        if abs(J2 - part.objective) >= cfg.min_improvement:
            failures.append(f"run {k}: not a fixed point ({abs(J2 - part.objective):.2e})")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 30.0
    record(1, ok, f"FCM invariants on 50 runs, {len(failures)} failures, {elapsed:.1f}s (< 30s)")
    assert ok, failures[:5]


def test_criterion_02_assignment_and_probabilities():
    failures = []
    for k, (scens, cfg, part) in enumerate(fcm_runs()):
        if np.any(np.sum(part.membership > 0.8, axis=1) > 1):
            failures.append(f"run {k}: two scores above 0.8")
        bs = bundle_probabilities(assign_bundles(part, FcmConfig(cfg.num_bundles, cfg.exponent)), scens)
        if np.any(bs.occurrence_count < 1):
            failures.append(f"run {k}: uncovered scenario")
        if not np.array_equal(bs.reweighted_prob, scens.probabilities / bs.occurrence_count):
            failures.append(f"run {k}: q_s mismatch")
        if abs(bs.bundle_prob.sum() - 1.0) > 1e-9:
            failures.append(f"run {k}: bundle probabilities sum to {bs.bundle_prob.sum()!r}")
    record(2, not failures, f"coverage, q_s = p_s/count, sum p_b = 1 on 50 runs, {len(failures)} failures")
    assert not failures, failures[:5]


def test_criterion_03_overlap_trend():
    t0 = time.perf_counter()
    scens = generate_scenario_set(6, 48, seed=0)
    counts = []
    for m in (1.5, 1.75, 2.0):
        bundles, _, _ = bundle_scenarios(scens, "fcm", 5, exponent=m, score_threshold=0.8, interval_param=0.95, seed=0)
        counts.append(overlap_stats(bundles, 48).repeated_count)
    elapsed = time.perf_counter() - t0
    ok = counts[2] > counts[0] and counts[0] <= counts[1] <= counts[2] and elapsed < 10.0
    record(3, ok, f"repeated scenarios at m = 1.5, 1.75, 2.0: {counts}, {elapsed:.2f}s (< 10s)")
    assert ok


def test_criterion_04_milp_oracle():
    t0 = time.perf_counter()
    matches = 0
    for seed in range(100):
        lp = random_binary_program(np.random.default_rng(seed), max_vars=12, max_rows=20)
        sol = solve_milp(lp, rel_gap=0.0)
        ref = binary_enumeration(lp)
        matches += sol.status == Status.OPTIMAL and abs(sol.objective - ref) <= 1e-6
    elapsed = time.perf_counter() - t0
    ok = matches == 100 and elapsed < 60.0
    record(4, ok, f"branch-and-bound vs 2^n enumeration {matches}/100, {elapsed:.1f}s (< 60s)")
    assert ok


def test_criterion_05_lp_oracle():
    t0 = time.perf_counter()
    matches = 0
    for seed in range(20):
        lp = random_feasible_lp(np.random.default_rng(seed), max_vars=8)
        sol = solve_lp(lp)
        ref = vertex_enumeration(lp)
        matches += sol.status == Status.OPTIMAL and abs(sol.objective - ref) <= 1e-6
    elapsed = time.perf_counter() - t0
    ok = matches == 20 and elapsed < 10.0
    record(5, ok, f"simplex vs vertex enumeration {matches}/20, {elapsed:.1f}s (< 10s)")
    assert ok


def test_criterion_06_regrouping_identity():
    inst, scens, bundles = tiny()
    full, fidx = build_extensive_form(inst, scens)
    worst = 0.0
    for x in balanced_designs(inst, 20, seed=6):
        ref = solve(fix_design(full, fidx, x)).objective
        total = 0.0
        for members in bundles:
            # rho = 0 means no proximal term; w = 0
            spec = SubproblemSpec(members, float(scens.probabilities[members].sum()), scens.probabilities[members])
            lp, idx = build_bundle_subproblem(inst, spec, scens)
            total += solve(fix_design(lp, idx, x)).objective
        worst = max(worst, abs(total - ref))
    ok = worst <= 1e-9
    record(6, ok, f"sum of bundle objectives vs extensive form on 20 designs, max gap {worst:.2e} (<= 1e-9)")
    assert ok


def test_criterion_07_recourse_bounds():
    inst, _, _ = tiny()
    rng = np.random.default_rng(7)
    designs = balanced_designs(inst, 49, seed=7) + [np.zeros(inst.num_arcs)]
    failures = []
    for k, x in enumerate(designs):
        d = rng.uniform(5.0, 11.0, inst.num_commodities)
        sol = solve_lp(build_recourse_lp(inst, x, d)[0])
        if sol.status != Status.OPTIMAL:
            failures.append(f"pair {k}: {sol.status.value}")
            continue
        if sol.objective > d.sum() + 1e-9:
            failures.append(f"pair {k}: Q = {sol.objective} > {d.sum()}")
        if not x.any() and abs(sol.objective - d.sum()) > 1e-9:
            failures.append(f"pair {k}: empty design Q = {sol.objective} != {d.sum()}")
    record(7, not failures, f"recourse feasible and Q <= sum d on 50 pairs, {len(failures)} failures")
    assert not failures, failures


def test_criterion_08_pha_vs_exact():
    inst, scens, members = tiny()
    bundles = bundle_probabilities(members, scens)
    opt = solve(build_extensive_form(inst, scens)[0]).objective
    t0 = time.perf_counter()
    best, runs = penalty_sweep(inst, scens, bundles, PAPER_RHO_GRID, PhaConfig(max_iterations=100, max_seconds=30))
    elapsed = time.perf_counter() - t0
    ok = opt - 1e-6 <= best.objective <= 1.05 * opt and elapsed < 300.0
    record(8, ok, f"best sweep objective {best.objective:.4f} (rho={best.penalty:g}) vs optimum {opt:.4f}, "
                  f"ratio {best.objective / opt:.4f} (<= 1.05), {elapsed:.0f}s (< 300s)")
    assert ok


def test_criterion_09_convex_convergence():
    inst, scens, _ = tiny()
    bundles = bundle_probabilities([[s] for s in range(len(scens))], scens)
    lp_opt = solve_lp(build_extensive_form(inst, scens, relax=True)[0]).objective
    cfg = PhaConfig(penalty=CONVEX_PENALTY, relax_binaries=True, max_iterations=50)
    res = pha_run(inst, scens, bundles, cfg)
    hist = {h.iteration: h.residual for h in res.history}
    r1 = hist[1]
    r50 = hist.get(50, res.history[-1].residual)
    rel = abs(res.objective - lp_opt) / lp_opt
    ok = r50 < 0.1 * r1 and rel <= 0.01
    record(9, ok, f"relaxed singleton PHA: residual {r1:.3g} -> {r50:.3g} (< 10%), objective {res.objective:.4f} "
                  f"vs LP optimum {lp_opt:.4f} ({rel:.2%}, <= 1%)")
    assert ok


@pytest.mark.slow
def test_criterion_10_end_to_end(tmp_path):
    cfg = ExperimentConfig(out_dir=str(tmp_path))
    t0 = time.perf_counter()
    rows = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    table = list(csv.DictReader((tmp_path / "table_v.csv").open()))
    complete = all_cells_complete(rows) and len(table) == 4 and all(
        r[c] != "" for r in table for c in ("objective", "rel_diff_pct", "iterations", "pha_seconds"))
    ref = next(float(r["objective"]) for r in table if r["method"] == "kmeans")
    fcm = [float(r["objective"]) for r in table if r["method"] == "fcm"]
    within = all(abs(o - ref) <= 0.05 * ref for o in fcm)
    ok = complete and within and elapsed < 900.0
    diffs = ", ".join(f"{r['exponent']}:{float(r['rel_diff_pct']):+.2f}%" for r in table if r["method"] == "fcm")
    record(10, ok, f"desk experiment complete={complete}, FCM vs k-means [{diffs}] (within 5%), "
                   f"{elapsed:.0f}s (< 900s)")
    assert ok
