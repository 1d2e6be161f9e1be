import itertools
from dataclasses import replace
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from allocplan.exact import (
    NEG_INF,
    BudgetExceeded,
    ExactOracle,
    brute_force_all,
    brute_force_optimum,
    final_allocate,
    value_oracle_exact,
)
from allocplan.mcf import FlowNetwork, InfeasibleFlowError, solve_mcmf
from allocplan.model import TrailerAssignment, check_feasibility, evaluate_objective
from allocplan.reduction import ReductionError, build_cot, trim_shelf_capacity

from .conftest import single_pair, tiny_instances

X0 = TrailerAssignment()
X1 = TrailerAssignment({"j1": 1})
X2 = TrailerAssignment({"j1": 2})


def all_x(inst):
    ranges = [range(inst.max_trailers[j] + 1) for j in inst.stores]
    return [TrailerAssignment(dict(zip(inst.stores, v))) for v in itertools.product(*ranges)]


# --- min-cost flow -------------------------------------------------------------


def test_mcmf_two_sources():
    net = FlowNetwork((3, 2), (4, 1), ((0, 0, 3, F(5)), (1, 0, 3, F(1)), (0, 1, 3, F(0)), (1, 1, 2, F(0))))
    res = solve_mcmf(net)
    assert res.profit == 16
    assert res.flow[:2] == (3, 1)


def test_mcmf_single_cell():
    res = solve_mcmf(FlowNetwork((7,), (7,), ((0, 0, 7, F(2)),)))
    assert res.flow == (7,) and res.profit == 14


def test_mcmf_unreachable_need():
    with pytest.raises(InfeasibleFlowError):
        solve_mcmf(FlowNetwork((5,), (5,), ((0, 0, 3, F(1)),)))


def test_mcmf_unbalanced():
    with pytest.raises(InfeasibleFlowError):
        solve_mcmf(FlowNetwork((5,), (4,), ((0, 0, 5, F(1)),)))


def _lp_optimum(net):
    """Independent route: the transport LP solved by HiGHS (vertices are integral)."""
    n_r, n_c, n = len(net.supplies), len(net.needs), len(net.arcs)
    if n == 0:
        return 0.0 if not any(net.supplies) else None
    A = np.zeros((n_r + n_c, n))
    for k, (a, b, _, _) in enumerate(net.arcs):
        A[a, k] = 1
        A[n_r + b, k] = 1
    res = linprog(
        c=[-float(p) for *_, p in net.arcs],
        A_eq=A,
        b_eq=list(net.supplies) + list(net.needs),
        bounds=[(0, c) for _, _, c, _ in net.arcs],
        method="highs",
    )
    return None if res.status == 2 else -res.fun


@st.composite
def networks(draw):
    n_r, n_c = draw(st.integers(1, 4)), draw(st.integers(1, 4))
    supplies = [draw(st.integers(0, 6)) for _ in range(n_r)]
    needs = [draw(st.integers(0, 6)) for _ in range(n_c)]
    diff = sum(supplies) - sum(needs)
    if diff > 0:
        needs[-1] += diff
    else:
        supplies[-1] -= diff
    arcs = []
    for a in range(n_r):
        for b in range(n_c):
            for _ in range(draw(st.integers(0, 2))):
                arcs.append((a, b, draw(st.integers(0, 6)), F(draw(st.integers(-6, 6)), draw(st.integers(1, 3)))))
    return FlowNetwork(tuple(supplies), tuple(needs), tuple(arcs))


@settings(max_examples=150, deadline=None)
@given(networks())
def test_mcmf_matches_lp(net):
    ref = _lp_optimum(net)
    try:
        res = solve_mcmf(net)
    except InfeasibleFlowError:
        assert ref is None
        return
    assert ref is not None
    assert float(res.profit) == pytest.approx(ref, abs=1e-7)
    assert all(isinstance(f, int) and 0 <= f <= c for f, (_, _, c, _) in zip(res.flow, net.arcs))


# --- value oracle --------------------------------------------------------------


def test_t1_values(t1):
    assert value_oracle_exact(t1, X1) == 6
    assert value_oracle_exact(t1, X0) == 0
    assert value_oracle_exact(t1, X2) == -2994


def test_t2_forced_breach(t2):
    assert value_oracle_exact(t2, X1, "final") == -998
    assert brute_force_optimum(t2, X1) == -998


def test_brute_force_t1(t1):
    assert brute_force_optimum(t1, X1) == 6
    assert brute_force_optimum(t1, X0) == 0


def test_brute_force_infeasible_sentinel(t2):
    # a second trailer needs s >= M + m - b >= 8 units but only 2 are in demand
    assert brute_force_optimum(t2, X2) == NEG_INF
    assert value_oracle_exact(t2, X2) == NEG_INF


def test_min_above_max_is_rejected_up_front():
    with pytest.raises(ReductionError):
        value_oracle_exact(single_pair((1, 0), m=9, M=8), X1)


def test_brute_force_budget(t1):
    with pytest.raises(BudgetExceeded):
        brute_force_all(t1, [X1], budget=10)


def test_oracle_caches(t1):
    oracle = ExactOracle(t1)
    oracle(X1), oracle(X1), oracle(X0)
    assert oracle.calls == 1


@settings(max_examples=80, deadline=None)
@given(tiny_instances())
def test_oracle_equals_brute_force(inst):
    xs = all_x(inst)
    oracle = ExactOracle(inst, "final")
    assert [oracle(x) for x in xs] == brute_force_all(inst, xs)


@settings(max_examples=80, deadline=None)
@given(tiny_instances())
def test_probe_equals_relaxed_brute_force(inst):
    """Probe variant == optimum where breach is bounded only by the pool: sum b <= S_b."""
    trimmed = trim_shelf_capacity(inst)
    oracle = ExactOracle(inst, "probe")
    for x in all_x(inst):
        s_b = dict(zip(*(lambda c: (c.source_ids, c.supplies))(build_cot(trimmed, x, "probe"))))["b"]
        ref = brute_force_all(inst, [x], breach_cap=s_b, breach_total=s_b)[0]
        assert oracle(x) == ref


@settings(max_examples=60, deadline=None)
@given(tiny_instances())
def test_probe_versus_final(inst):
    probe, final = ExactOracle(inst, "probe"), ExactOracle(inst, "final")
    for x in all_x(inst):
        g_final = final(x)
        if g_final == NEG_INF:
            continue
        plan = final_allocate(inst, x)
        if sum(plan.b.values()) <= inst.trailer_max:
            assert probe(x) >= g_final
        p_cot = build_cot(trim_shelf_capacity(inst), x, "probe")
        p_res = solve_mcmf(FlowNetwork.from_cot(p_cot))
        b_flows = [f for c, f in enumerate(p_res.flow) if p_cot.source_ids[p_cot.src[c]] == "b" and p_cot.sink_ids[p_cot.snk[c]] != "e"]
        if all(f <= inst.trailer_min for f in b_flows):
            assert probe(x) == g_final


def test_probe_can_be_infeasible_where_final_is_not():
    """Three stores each need m = 3 of breach; the probe pool holds only M = 8."""
    base = single_pair((0, 0), inventory=100, m=3, M=8, R=1)
    inst = replace(
        base,
        stores=("j1", "j2", "j3"),
        max_trailers={j: 1 for j in ("j1", "j2", "j3")},
        store_priority={j: 1 for j in ("j1", "j2", "j3")},
        demand={},
        shelf_capacity={},
    )
    x = TrailerAssignment({"j1": 1, "j2": 1, "j3": 1})
    assert value_oracle_exact(inst, x, "final") == -9 * 1000
    assert value_oracle_exact(inst, x, "probe") == NEG_INF


# --- final allocation ------------------------------------------------------------


def test_final_allocate_t1(t1):
    plan = final_allocate(t1, X1)
    assert plan.d == {("i1", "j1", 0): 4, ("i1", "j1", 1): 4} and plan.b == {}
    assert plan.objective_value == 106


def test_final_allocate_empty(t1):
    plan = final_allocate(t1, X0)
    assert plan.d == {} and plan.b == {} and plan.objective_value == 0


def test_final_allocate_free_breach():
    inst = single_pair((2, 0), gamma=0)
    plan = final_allocate(inst, X1)
    assert plan.d == {("i1", "j1", 0): 2} and plan.b == {"j1": 1}
    assert plan.objective_value == 102


@settings(max_examples=60, deadline=None)
@given(tiny_instances())
def test_final_plans_integral_feasible_optimal(inst):
    oracle = ExactOracle(inst, "final")
    M, m = inst.trailer_max, inst.trailer_min
    for x in all_x(inst):
        g = oracle(x)
        if g == NEG_INF:
            continue
        plan = final_allocate(inst, x)
        assert all(F(v).denominator == 1 for v in plan.d.values())
        assert check_feasibility(inst, x, plan) == []
        assert plan.objective_value == evaluate_objective(inst, x, plan)
        h = inst.beta * sum(inst.store_priority[j] * c for j, c in x.items())
        assert plan.objective_value == g + h
        s = plan.s_store()
        for j in inst.stores:
            sj = s.get(j, 0)
            assert M * (x[j] - x.y(j)) + m * x.y(j) - plan.b.get(j, 0) <= sj <= M * x[j]
