"""Exact global optimum over trailer vectors by depth-first branch and bound.

Only meant for tiny instances: every leaf costs one exact min-cost-flow solve.
The bound at a node assumes every unfixed store takes all its trailers and
that the allocation earns its full utility cap without breach.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional

from .exact import ExactOracle, final_allocate
from .model import AllocationPlan, Instance, TrailerAssignment
from .reduction import trim_shelf_capacity


@dataclass(frozen=True)
class BnbNode:
    fixed: Dict[str, int]
    bound: Fraction
    depth: int


@dataclass(frozen=True)
class GlobalResult:
    x: TrailerAssignment
    plan: AllocationPlan
    objective: Fraction
    optimal: bool
    nodes: int


def _tie_key(x: TrailerAssignment):
    # among equal objectives prefer fewer trailers, then the lexicographically smallest vector
    return (x.total(), x.key())


def solve_global(inst: Instance, budget: int = 1_000_000, oracle: Optional[ExactOracle] = None) -> GlobalResult:
    """Maximize ``g(x) + beta * sum p_j x_j`` over ``0 <= x_j <= R_j``.

    When the node budget runs out the best vector found so far is returned
    with ``optimal=False``.
    """
    oracle = oracle if oracle is not None else ExactOracle(inst, "final")
    trimmed = trim_shelf_capacity(inst)
    utility_cap = trimmed.max_allocation_utility()
    order: List[str] = sorted(inst.stores, key=lambda j: (-inst.beta * inst.store_priority[j], j))
    weight = {j: inst.beta * inst.store_priority[j] for j in order}
    suffix = [Fraction(0)] * (len(order) + 1)
    for n in range(len(order) - 1, -1, -1):
        j = order[n]
        suffix[n] = suffix[n + 1] + max(Fraction(0), weight[j]) * inst.max_trailers[j]

    best_x = TrailerAssignment()
    best_f: Fraction = Fraction(0)  # x = 0 is always feasible with value 0
    nodes = 0
    exhausted = False

    def leaf(x: TrailerAssignment) -> None:
        nonlocal best_x, best_f
        g = oracle(x)
        if g == -math.inf:
            return
        f = g + sum((weight[j] * c for j, c in x.items()), Fraction(0))
        if f > best_f or (f == best_f and _tie_key(x) < _tie_key(best_x)):
            best_x, best_f = x, f

    stack = [BnbNode({}, utility_cap + suffix[0], 0)]
    while stack:
        node = stack.pop()
        if node.bound < best_f:
            continue
        nodes += 1
        if nodes > budget:
            exhausted = True
            break
        if node.depth == len(order):
            leaf(TrailerAssignment(node.fixed))
            continue
        j = order[node.depth]
        fixed_part = sum((weight[s] * c for s, c in node.fixed.items()), Fraction(0))
        children = []
        for c in range(inst.max_trailers[j] + 1):
            fixed = dict(node.fixed)
            if c:
                fixed[j] = c
            bound = utility_cap + fixed_part + weight[j] * c + suffix[node.depth + 1]
            children.append(BnbNode(fixed, bound, node.depth + 1))
        # explore x_j = 0 first (pushed last)
        stack.extend(reversed(children))

    plan = final_allocate(inst, best_x)
    if plan.objective_value != best_f:
        raise AssertionError(f"final allocation {plan.objective_value} disagrees with oracle value {best_f}")
    return GlobalResult(best_x, plan, best_f, not exhausted, nodes)
