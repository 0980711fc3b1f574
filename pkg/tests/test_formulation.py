import itertools

import numpy as np
import pytest

from sndh.errors import ModelBuildError
from sndh.formulation import (
    SubproblemSpec,
    build_bundle_subproblem,
    build_extensive_form,
    build_recourse_lp,
    design_balance_violation,
    design_cost,
    evaluate_design,
    proximal_linearized,
    recourse_value,
)
from sndh.milp import Status, solve, solve_lp, solve_milp
from sndh.network import Commodity, Instance, commodity_arc_allowed, generate_instance, SpaceTimeArc
from sndh.scenarios import ScenarioSet, generate_scenario_set


def two_node(demand=8.0, capacity=12.0):
    cost = np.array([[1.0, 5.0], [6.0, 1.0]])
    inst = Instance(2, 2, [Commodity(0, 0, 1, 1)], cost, capacity, 80.0)
    return inst, ScenarioSet(np.array([[demand]]), np.array([1.0]))


def fix_design(lp, idx, x):
    lo, hi = lp.var_lower.copy(), lp.var_upper.copy()
    lo[idx.design] = x
    hi[idx.design] = x
    return lp.with_bounds(lo, hi)


def balanced_designs(inst):
    for bits in itertools.product((0.0, 1.0), repeat=inst.num_arcs):
        x = np.array(bits)
        if design_balance_violation(inst, x) < 0.5:
            yield x


def test_extensive_form_matches_enumeration():
    inst, scens = two_node()
    lp, idx = build_extensive_form(inst, scens)
    assert len(idx.design) == 8 and lp.is_binary[idx.design].all()
    sol = solve_milp(lp)
    x = sol.primal[idx.design].round()
    assert design_balance_violation(inst, x) == 0.0
    best = min(evaluate_design(inst, scens, x_, "native") for x_ in balanced_designs(inst))
    assert sol.objective == pytest.approx(best, abs=1e-6)


def test_zero_demand_gives_empty_design():
    inst = generate_instance(3, 3, 2, seed=0)
    scens = ScenarioSet(np.zeros((2, 2)), np.array([0.5, 0.5]))
    lp, idx = build_extensive_form(inst, scens)
    sol = solve(lp)
    assert sol.objective == pytest.approx(0.0)
    assert np.all(sol.primal[idx.design] < 0.5)


def test_excess_demand_is_outsourced():
    inst, scens = two_node(demand=100.0)
    lp, idx = build_extensive_form(inst, scens)
    sol = solve_milp(lp)
    assert sol.status == Status.OPTIMAL
    assert sol.primal[idx.outsource[(0, 0)]] > 0


def test_flow_columns_respect_windows():
    inst = generate_instance(3, 4, 3, seed=2)
    scens = generate_scenario_set(inst, 2, seed=2)
    _, idx = build_extensive_form(inst, scens)
    for (a, k, s) in idx.flow:
        i, j, t = inst.arc_of(a)
        arc = SpaceTimeArc(i, j, t, (t - 1) % inst.horizon)
        assert commodity_arc_allowed(inst, inst.commodities[k], arc)
    cols = list(idx.design) + list(idx.flow.values()) + list(idx.outsource.values())
    assert len(set(cols)) == len(cols)


def test_empty_window_rejected(monkeypatch):
    inst, scens = two_node()
    monkeypatch.setattr(Commodity, "window", lambda self, T: [])
    with pytest.raises(ModelBuildError):
        build_extensive_form(inst, scens)


def test_recourse_examples():
    inst, _ = two_node()
    zero = np.zeros(inst.num_arcs)
    assert recourse_value(inst, zero, np.array([8.0])) == pytest.approx(8.0)
    direct = zero.copy()
    direct[inst.arc_index(0, 1, 1)] = 1.0
    assert recourse_value(inst, direct, np.array([8.0])) == pytest.approx(0.0)
    assert recourse_value(inst, direct, np.array([15.0])) == pytest.approx(3.0)


def test_recourse_never_exceeds_total_demand():
    inst = generate_instance(3, 3, 2, seed=0)
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.integers(0, 2, inst.num_arcs).astype(float)
        d = rng.uniform(5, 11, 2)
        lp, _ = build_recourse_lp(inst, x, d)
        sol = solve_lp(lp)
        assert sol.status == Status.OPTIMAL
        assert sol.objective <= d.sum() + 1e-9


def tiny():
    inst = generate_instance(3, 3, 2, seed=0)
    return inst, generate_scenario_set(inst, 4, seed=0)


def test_regrouping_identity():
    inst, scens = tiny()
    bundles = [[0, 1], [2, 3]]
    full, fidx = build_extensive_form(inst, scens)
    rng = np.random.default_rng(1)
    designs = [x for x in balanced_designs_sampled(inst, rng, 5)]
    for x in designs:
        ref = solve(fix_design(full, fidx, x)).objective
        total = 0.0
        for members in bundles:
            spec = SubproblemSpec(members, float(scens.probabilities[members].sum()), scens.probabilities[members])
            lp, idx = build_bundle_subproblem(inst, spec, scens)
            total += solve(fix_design(lp, idx, x)).objective
        assert total == pytest.approx(ref, abs=1e-9)


def balanced_designs_sampled(inst, rng, count):
    """Random balanced designs built from random vehicle cycles."""
    N, T = inst.num_terminals, inst.horizon
    out = []
    while len(out) < count:
        x = np.zeros(inst.num_arcs)
        for _ in range(int(rng.integers(1, 4))):
            i = int(rng.integers(N))
            t0 = int(rng.integers(T))
            for step in range(T):
                t = (t0 + step) % T
                j = int(rng.integers(N)) if step < T - 1 else i
                x[inst.arc_index(i, j, (t + 1) % T)] = 1.0
                i = j
        if design_balance_violation(inst, x) < 0.5:
            out.append(x)
    return out


def test_cross_formulation_consistency():
    inst, scens = two_node()
    scens = ScenarioSet(np.array([[6.0], [15.0]]), np.array([0.3, 0.7]))
    lp, idx = build_extensive_form(inst, scens)
    sol = solve_milp(lp)
    x = sol.primal[idx.design].round()
    for s in range(2):
        part = inst.outsourcing_cost * sum(sol.primal[idx.outsource[(k, s)]] for k in range(inst.num_commodities))
        assert part == pytest.approx(inst.outsourcing_cost * recourse_value(inst, x, scens.demands[s]), abs=1e-6)
    assert sol.objective == pytest.approx(evaluate_design(inst, scens, x), abs=1e-6)


def test_penalty_linearization_example():
    inst, scens = two_node()
    xbar = np.full(inst.num_arcs, 0.5)
    spec = SubproblemSpec([0], 1.0, np.array([1.0]), duals=np.zeros(inst.num_arcs), consensus=xbar, penalty=1.0)
    lp, idx = build_bundle_subproblem(inst, spec, scens)
    assert np.allclose(lp.costs[idx.design], inst.arc_costs_vector())
    assert lp.objective_offset == pytest.approx(inst.num_arcs * 0.5 * 0.25)


@pytest.mark.parametrize("rho", [0.8, 1.3, 2.0])
def test_linearization_exact_on_binaries(rho):
    rng = np.random.default_rng(5)
    xbar = rng.random(6)
    for bits in itertools.product((0.0, 1.0), repeat=6):
        x = np.array(bits)
        assert proximal_linearized(x, xbar, rho) == pytest.approx(0.5 * rho * np.sum((x - xbar) ** 2), abs=1e-12)


def test_proximal_fixed_point():
    inst, scens = tiny()
    spec = SubproblemSpec([0], 1.0, np.array([1.0]))
    lp, idx = build_bundle_subproblem(inst, spec, scens)
    free = solve(lp)
    x = free.primal[idx.design].round()
    prox = SubproblemSpec([0], 1.0, np.array([1.0]), duals=np.zeros(inst.num_arcs), consensus=x, penalty=1.5)
    lp2, idx2 = build_bundle_subproblem(inst, prox, scens)
    sol = solve(lp2)
    assert sol.objective == pytest.approx(free.objective, abs=1e-6)


def test_singleton_bundle_is_deterministic_model():
    inst, scens = tiny()
    one = scens.subset([2])
    one = ScenarioSet(one.demands, np.array([1.0]))
    det = solve(build_extensive_form(inst, one)[0]).objective
    spec = SubproblemSpec([2], 1.0, np.array([1.0]))
    assert solve(build_bundle_subproblem(inst, spec, scens)[0]).objective == pytest.approx(det, abs=1e-6)


def test_relaxed_proximal_interpolates_square():
    inst, scens = two_node()
    xbar = np.linspace(0.1, 0.9, inst.num_arcs)
    spec = SubproblemSpec([0], 1.0, np.array([1.0]), duals=np.zeros(inst.num_arcs), consensus=xbar,
                          penalty=2.0, relax=True)
    lp, idx = build_bundle_subproblem(inst, spec, scens)
    for x in (np.zeros(inst.num_arcs), xbar):
        fixed = fix_design(lp, idx, x)
        val = solve_lp(fixed).objective
        exact = design_cost(inst, x) + 80.0 * recourse_value(inst, x, scens.demands[0]) + np.sum((x - xbar) ** 2)
        if design_balance_violation(inst, x) < 1e-9:
            assert val == pytest.approx(exact, abs=1e-9)


def test_spec_rejects_bad_penalty():
    with pytest.raises(ValueError):
        SubproblemSpec([0], 1.0, np.array([1.0]), consensus=np.zeros(2), penalty=0.0)
    with pytest.raises(ValueError):
        SubproblemSpec([0], 1.0, np.array([1.0]), consensus=np.full(2, 1.5), penalty=1.0)
