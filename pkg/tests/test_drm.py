from dataclasses import replace
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize
from scipy.special import expit

from allocplan.drm import (
    MAX_DOUBLINGS,
    DrmOracle,
    InfeasibleTransportError,
    _presolve,
    drm_solve,
    drm_value,
    normalize,
    root_find_monotone,
    value_oracle_drm,
)
from allocplan.exact import NEG_INF, ExactOracle, value_oracle_exact
from allocplan.model import Instance, TrailerAssignment
from allocplan.reduction import CotInstance, build_cot, trim_shelf_capacity

from .conftest import single_pair, tiny_instances

X1 = TrailerAssignment({"j1": 1})


def _cot(supplies, needs, cells):
    """Bare CotInstance from (src, snk, cap, profit) tuples; ids are placeholders."""
    src, snk, cap, profit = zip(*cells) if cells else ((), (), (), ())
    return CotInstance(
        source_ids=tuple(f"s{k}" for k in range(len(supplies))),
        source_kinds=("item",) * len(supplies),
        sink_ids=tuple(f"t{k}" for k in range(len(needs))),
        sink_kinds=("store",) * len(needs),
        supplies=tuple(supplies),
        needs=tuple(needs),
        src=tuple(src),
        snk=tuple(snk),
        day=(0,) * len(src),
        cap=tuple(cap),
        profit=tuple(F(p) for p in profit),
    )


# --- normalization ------------------------------------------------------------------


def test_normalize_divides_by_total_mass(t1):
    cot = build_cot(t1, X1, "probe")
    scaled, K = normalize(cot)
    assert K == 23
    assert scaled.supplies[0] == pytest.approx(10 / 23)
    assert scaled.cap[list(cot.cap).index(8)] == pytest.approx(8 / 23)
    assert scaled.supplies.sum() == pytest.approx(1.0)


def test_zero_mass_fast_path():
    cot = _cot((0,), (0,), [(0, 0, 0, 1)])
    d, state = drm_solve(cot)
    assert list(d) == [0.0] and state.converged and state.iterations == 0


# --- scalar root finding ------------------------------------------------------------


def test_root_logistic():
    r = root_find_monotone(lambda a: -1 + 2 / (1 + np.exp(a)), -10, 10)
    assert r.bracketed and abs(r.root) < 1e-10


def test_root_identity():
    assert root_find_monotone(lambda a: a, -1, 2).root == pytest.approx(0, abs=1e-12)


def test_root_expands_bad_bracket():
    r = root_find_monotone(lambda a: a - 37.5, 0, 1)
    assert r.bracketed and r.root == pytest.approx(37.5)


def test_root_one_signed_is_flagged():
    r = root_find_monotone(lambda a: 1 + expit(-a))
    assert not r.bracketed
    assert abs(r.root) == 2.0**MAX_DOUBLINGS


# --- drm_solve examples ------------------------------------------------------------


def test_single_cell_is_exact():
    d, state = drm_solve(_cot((8,), (8,), [(0, 0, 8, 3)]))
    assert state.converged and d[0] == pytest.approx(8, abs=1e-6 * 8)


def test_g_root_closed_form():
    # S = 1 with a single cell of cap 2 against a free sink: d = 2 * sigmoid(a) = 1 at a = 0
    cot = _cot((1, 1), (2,), [(0, 0, 2, 0), (1, 0, 2, 0)])
    d, state = drm_solve(cot)
    assert state.converged
    assert d == pytest.approx([1, 1], abs=1e-6)
    assert state.log_phi[0] + state.log_psi[0] == pytest.approx(0, abs=1e-6)


def _regularized_reference(cot, mu):
    """Independent route: minimize the smooth convex dual of
    max sum P d - mu * sum[d ln d + (D-d) ln(D-d)] s.t. marginals,
    f(u, v) = S.u + N.v + mu * sum D softplus((P - u_i - v_j) / mu), by BFGS."""
    scaled, K = normalize(cot)
    n_r = len(cot.supplies)
    D, P, src, snk = scaled.cap, scaled.profit, scaled.src, scaled.snk

    def f(w):
        u, v = w[:n_r], w[n_r:]
        z = (P - u[src] - v[snk]) / mu
        s = expit(z) * D
        val = scaled.supplies @ u + scaled.needs @ v + mu * np.sum(D * np.logaddexp(0, z))
        grad = np.concatenate([
            scaled.supplies - np.bincount(src, weights=s, minlength=n_r),
            scaled.needs - np.bincount(snk, weights=s, minlength=len(cot.needs)),
        ])
        return val, grad

    res = minimize(f, np.zeros(n_r + len(cot.needs)), jac=True, method="BFGS", options={"gtol": 1e-11, "maxiter": 10000})
    w = res.x
    return K * D * expit((P - w[:n_r][src] - w[n_r:][snk]) / mu)


@pytest.mark.parametrize("variant", ["probe", "final"])
@pytest.mark.parametrize("mu", [1.0, 0.1])
def test_t1_matches_regularized_reference(t1, variant, mu):
    cot = build_cot(t1, X1, variant)
    d, state = drm_solve(cot, mu=mu)
    ref = _regularized_reference(cot, mu)
    assert state.converged
    assert d == pytest.approx(ref, abs=1e-4)
    assert drm_value(cot, d) == pytest.approx(drm_value(cot, ref), rel=1e-4)


def test_t1_limit_gap_shrinks(t1):
    exact = float(value_oracle_exact(t1, X1, "probe"))
    gaps = [abs(exact - value_oracle_drm(t1, X1, "probe", mu=mu).value) / exact for mu in (1.0, 0.1, 0.01)]
    assert gaps[2] < gaps[0]
    assert gaps[2] <= 0.02


def test_t1_value_at_default_mu_is_below_exact(t1):
    """At mu = 1 with unit-scale profits the entropic smoothing is strong; the value is not within 2% of 6."""
    v = value_oracle_drm(t1, X1, "probe").value
    assert 4.0 < v < 6.0


def test_zero_assignment_is_zero(t1):
    oracle = DrmOracle(t1)
    assert oracle(TrailerAssignment()) == 0 and oracle.calls == 0


def test_infeasible_assignment_is_sentinel(t2):
    assert value_oracle_drm(t2, TrailerAssignment({"j1": 2})).value == float("-inf")


def test_large_gamma_stays_finite():
    inst = single_pair((2, 0), gamma=10**6)
    v = value_oracle_drm(inst, X1)
    assert v.converged and np.isfinite(v.value)
    assert v.value == pytest.approx(float(value_oracle_exact(inst, X1)), rel=1e-3)


def test_deterministic(t1):
    cot = build_cot(t1, X1, "final")
    d1, s1 = drm_solve(cot)
    d2, s2 = drm_solve(cot)
    assert d1.tobytes() == d2.tobytes()
    assert s1.log_phi.tobytes() == s2.log_phi.tobytes()


def test_non_convergence_is_flagged():
    cot = _cot((3, 2), (2, 3), [(0, 0, 3, 5), (0, 1, 3, 0), (1, 0, 2, 0), (1, 1, 2, 1)])
    d, state = drm_solve(cot, eps=1e-300, max_iter=3)
    assert not state.converged and state.iterations == 3


# --- presolve ------------------------------------------------------------------------


def test_presolve_fixes_forced_cells():
    # only the diagonal routes all mass: every cell is fixed
    fixed, active, row_t, col_t = _presolve((2, 1), (2, 1), np.array([0, 1, 0]), np.array([0, 1, 1]), (2, 1, 1))
    assert list(fixed) == [2, 1, 0] and not active.any()
    assert list(row_t) == [0, 0] and list(col_t) == [0, 0]


def test_presolve_keeps_cycle_free():
    fixed, active, _, _ = _presolve((2, 2), (2, 2), np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1]), (2, 2, 2, 2))
    assert active.all() and not fixed.any()


def test_presolve_detects_infeasible():
    with pytest.raises(InfeasibleTransportError):
        _presolve((3,), (3,), np.array([0]), np.array([0]), (2,))


def test_saturated_row_solved_exactly():
    # source 0 must send its full caps; the remaining cells form a free cycle
    cot = _cot((4, 2), (3, 3), [(0, 0, 2, 1), (0, 1, 2, 0), (1, 0, 2, 0), (1, 1, 2, 0)])
    d, state = drm_solve(cot)
    assert state.converged
    assert d[:2] == pytest.approx([2, 2], abs=1e-9)
    assert d[2:] == pytest.approx([1, 1], abs=1e-6)


# --- properties -----------------------------------------------------------------------


def _marginal_error(cot, d):
    src, snk = np.asarray(cot.src), np.asarray(cot.snk)
    rows = np.bincount(src, weights=d, minlength=len(cot.supplies)) - np.asarray(cot.supplies)
    cols = np.bincount(snk, weights=d, minlength=len(cot.needs)) - np.asarray(cot.needs)
    return max(np.abs(rows).max(), np.abs(cols).max())


@settings(max_examples=60, deadline=None)
@given(tiny_instances(), st.sampled_from(["probe", "final"]), st.data())
def test_marginals_and_caps(inst, variant, data):
    x = TrailerAssignment({j: data.draw(st.integers(0, inst.max_trailers[j])) for j in inst.stores})
    cot = build_cot(trim_shelf_capacity(inst), x, variant)
    try:
        d, state = drm_solve(cot, eps=1e-6)
    except InfeasibleTransportError:
        assert ExactOracle(inst, variant)(x) == NEG_INF
        return
    assert state.converged
    assert np.all(d >= 0) and np.all(d <= np.asarray(cot.cap, dtype=float))
    assert _marginal_error(cot, d) <= 1e-6 * max(cot.total_mass, 1) * (1 + 1e-9)
    assert np.all(np.isfinite(state.log_phi)) and np.all(np.isfinite(state.log_psi))


@settings(max_examples=60, deadline=None)
@given(tiny_instances(), st.data())
def test_row_function_sign_structure(inst, data):
    """g_i(a) = S_i - sum D sigmoid(a + .) falls from S_i >= 0 towards S_i - sum D."""
    x = TrailerAssignment({j: data.draw(st.integers(0, inst.max_trailers[j])) for j in inst.stores})
    cot = build_cot(trim_shelf_capacity(inst), x, "final")
    scaled, _ = normalize(cot)
    c = np.array([data.draw(st.floats(-5, 5)) for _ in cot.needs])
    for i in range(len(cot.supplies)):
        cells = np.flatnonzero(scaled.src == i)
        D = scaled.cap[cells]
        base = scaled.profit[cells] + c[scaled.snk[cells]]

        def g(a):
            return scaled.supplies[i] - np.sum(D * expit(a + base))

        grid = [g(a) for a in np.linspace(-60, 60, 41)]
        assert all(u >= v for u, v in zip(grid, grid[1:]))
        assert g(-1e3) == pytest.approx(scaled.supplies[i])
        assert g(1e3) == pytest.approx(scaled.supplies[i] - D.sum())


def test_warm_start_gives_same_value(t1):
    inst = replace(t1, max_trailers={"j1": 2})
    cold = DrmOracle(inst)(TrailerAssignment({"j1": 2}))
    oracle = DrmOracle(inst)
    oracle(X1)
    warm = oracle(TrailerAssignment({"j1": 2}), parent=X1)
    assert warm == pytest.approx(cold, rel=1e-6)


def _three_stores():
    stores = ("a", "b", "c")
    demand = {("i", "a", 0): 5, ("i", "b", 0): 5, ("i", "c", 0): 5, ("k", "b", 1): 5, ("k", "c", 0): 2}
    return Instance(
        items=("i", "k"),
        stores=stores,
        categories={"x": ("i", "k")},
        labour_capacity={"x": 30},
        inventory={"i": 9, "k": 6},
        trailer_max=5,
        trailer_min=3,
        max_trailers={j: 1 for j in stores},
        demand=demand,
        store_priority={"a": 1, "b": 2, "c": 1},
        alpha=(F(1), F(1, 10)),
        beta=F(10),
        gamma=F(100),
        item_store_priority={("i", "a", 0): F(1), ("i", "b", 0): F(1, 2), ("i", "c", 0): F(1, 4),
                             ("k", "b", 1): F(1), ("k", "c", 0): F(1, 2)},
    )


def test_candidate_ranking_matches_exact():
    inst = _three_stores()
    exact, drm = ExactOracle(inst), DrmOracle(inst)
    cands = [TrailerAssignment({j: 1}) for j in inst.stores]
    total = [inst.beta * inst.store_priority[j] for j in inst.stores]
    e_best = max(range(3), key=lambda k: float(exact(cands[k]) + total[k]))
    d_best = max(range(3), key=lambda k: drm(cands[k]) + float(total[k]))
    assert d_best == e_best
