"""Exact value oracle, final allocation and the brute-force reference."""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .mcf import FlowNetwork, InfeasibleFlowError, solve_mcmf
from .model import AllocationPlan, Instance, TrailerAssignment, evaluate_objective, lcm_denominator
from .reduction import CotTemplate, Variant, extract_plan, trim_shelf_capacity

NEG_INF = float("-inf")
Value = Union[Fraction, float]

BRUTE_FORCE_BUDGET = 10**7


class InfeasibleAllocationError(RuntimeError):
    """No allocation satisfies the constraints for the given trailers."""


class BudgetExceeded(RuntimeError):
    pass


class ExactOracle:
    """``g(x)`` by exact min-cost flow, memoised per trailer vector.

    Infeasible trailer vectors evaluate to ``-inf``.
    """

    def __init__(self, inst: Instance, variant: Variant = "final"):
        self.inst = trim_shelf_capacity(inst)
        self.variant = variant
        self.template = CotTemplate.build(self.inst, variant)
        self.calls = 0
        self._cache: Dict[tuple, Value] = {}

    def solve(self, x: TrailerAssignment):
        cot = self.template.instantiate(x)
        return cot, solve_mcmf(FlowNetwork.from_cot(cot))

    def __call__(self, x: TrailerAssignment, parent: Optional[TrailerAssignment] = None) -> Value:
        key = x.key()
        if key not in self._cache:
            self._cache[key] = self._evaluate(x)
        return self._cache[key]

    def _evaluate(self, x: TrailerAssignment) -> Value:
        if x.total() == 0:
            return Fraction(0)
        self.calls += 1
        try:
            _, res = self.solve(x)
        except InfeasibleFlowError:
            return NEG_INF
        return res.profit


def value_oracle_exact(inst: Instance, x: TrailerAssignment, variant: Variant = "final") -> Value:
    """Optimal allocation value (allocation utility minus breach cost) for fixed ``x``."""
    return ExactOracle(inst, variant)(x)


def final_allocate(inst: Instance, x: TrailerAssignment) -> AllocationPlan:
    """Integral optimal allocation for ``x`` with the per-store breach bound ``b_j <= m``."""
    trimmed = trim_shelf_capacity(inst)
    template = CotTemplate.build(trimmed, "final")
    cot = template.instantiate(x)
    try:
        res = solve_mcmf(FlowNetwork.from_cot(cot))
    except InfeasibleFlowError as exc:
        raise InfeasibleAllocationError(f"no feasible allocation for {x}: {exc}") from exc
    plan = extract_plan(cot, res.flow)
    # with gamma = 0 the flow may carry more breach than needed; keep only the
    # minimum each store requires (never lowers the objective)
    M, m = inst.trailer_max, inst.trailer_min
    s_store = plan.s_store()
    b = {}
    for j in inst.stores:
        need = M * (x[j] - x.y(j)) + m * x.y(j) - s_store.get(j, Fraction(0))
        if need > 0:
            b[j] = Fraction(need)
    plan = AllocationPlan(plan.d, b)
    return AllocationPlan(plan.d, plan.b, evaluate_objective(inst, x, plan))


def _mixed_radix(flat: np.ndarray, radices: Sequence[int]) -> np.ndarray:
    out = np.empty((flat.size, len(radices)), dtype=np.int64)
    rest = flat.copy()
    for k in range(len(radices) - 1, -1, -1):
        rest, out[:, k] = np.divmod(rest, radices[k])
    return out


def brute_force_all(
    inst: Instance,
    xs: Sequence[TrailerAssignment],
    breach_cap: Optional[int] = None,
    breach_total: Optional[int] = None,
    budget: int = BRUTE_FORCE_BUDGET,
    chunk: int = 1 << 15,
) -> List[Value]:
    """Exhaustive optimum of the fixed-trailer problem for each ``x`` in ``xs``.

    Every integral ``d`` with ``0 <= d <= D`` is enumerated on the untrimmed
    instance and checked against every constraint directly. For each ``d``
    the smallest breach meeting the trailer minimum is used, which is optimal
    because the breach only enters the objective with weight ``-gamma <= 0``.
    ``breach_cap`` bounds each store's breach (default ``m``); ``breach_total``
    optionally bounds their sum. Returns ``-inf`` where nothing is feasible.
    """
    M, m = inst.trailer_max, inst.trailer_min
    breach_cap = m if breach_cap is None else breach_cap
    cells = sorted(c for c, q in inst.demand.items() if q > 0)
    radices = [inst.demand[c] + 1 for c in cells]
    size = 1
    for r in radices:
        size *= r
    if size > budget:
        raise BudgetExceeded(f"{size} allocations exceed the enumeration budget {budget}")

    items, stores = list(inst.items), list(inst.stores)
    pairs = sorted({(i, j) for i, j, _ in cells})
    cats = list(inst.categories)
    cat_of = inst.category_of()
    n = len(cells)
    A_item = np.zeros((n, len(items)), dtype=np.int64)
    A_store = np.zeros((n, len(stores)), dtype=np.int64)
    A_pair = np.zeros((n, len(pairs)), dtype=np.int64)
    A_cat = np.zeros((n, len(cats)), dtype=np.int64)
    for k, (i, j, t) in enumerate(cells):
        A_item[k, items.index(i)] = 1
        A_store[k, stores.index(j)] = 1
        A_pair[k, pairs.index((i, j))] = 1
        A_cat[k, cats.index(cat_of[i])] = 1
    inventory = np.array([inst.inventory[i] for i in items], dtype=np.int64)
    labour = np.array([inst.labour_capacity[l] for l in cats], dtype=np.int64)
    big = np.iinfo(np.int64).max // 4
    shelf = np.array([inst.shelf_capacity.get(p, big) for p in pairs], dtype=np.int64)

    profits = [inst.profit(*c) for c in cells]
    L = lcm_denominator(profits + [inst.gamma])
    P = np.array([int(p * L) for p in profits], dtype=np.int64)
    G = int(inst.gamma * L)
    if (sum(abs(int(p)) for p in P) * max(radices, default=1) + G * breach_cap * len(stores)) >= 2**62:
        raise BudgetExceeded("scaled objective does not fit in 64-bit integers")

    xv = [np.array([x[j] for j in stores], dtype=np.int64) for x in xs]
    lower = [M * (v - np.minimum(v, 1)) + m * np.minimum(v, 1) for v in xv]
    best: List[Optional[int]] = [None] * len(xs)

    for start in range(0, size, chunk):
        flat = np.arange(start, min(size, start + chunk), dtype=np.int64)
        d = _mixed_radix(flat, radices) if n else np.zeros((1, 0), dtype=np.int64)
        s_store = d @ A_store
        ok = np.all(d @ A_item <= inventory, axis=1)
        ok &= np.all(d @ A_pair <= shelf, axis=1)
        ok &= np.all(d @ A_cat <= labour, axis=1)
        value = d @ P
        for k, (v, lo) in enumerate(zip(xv, lower)):
            b = np.maximum(lo - s_store, 0)
            feas = ok & np.all(s_store <= M * v, axis=1) & np.all(b <= breach_cap, axis=1)
            if breach_total is not None:
                feas &= b.sum(axis=1) <= breach_total
            if feas.any():
                top = int((value - G * b.sum(axis=1))[feas].max())
                if best[k] is None or top > best[k]:
                    best[k] = top
    return [NEG_INF if v is None else Fraction(v, L) for v in best]


def brute_force_optimum(inst: Instance, x: TrailerAssignment, budget: int = BRUTE_FORCE_BUDGET) -> Value:
    return brute_force_all(inst, [x], budget=budget)[0]
