"""Problem data model: instances, trailer assignments, plans and their evaluation.

Quantities measured in whpacks (capacities, inventory, demand) are plain
ints. Priorities and hyper-parameters (``q``, ``alpha``, ``beta``,
``gamma``) are :class:`fractions.Fraction` so that objective values can be
compared exactly.
"""

from __future__ import annotations

import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

Pair = Tuple[str, str]
Cell = Tuple[str, str, int]

ONE = Fraction(1)


class DimensionError(ValueError):
    """A plan or assignment refers to items/stores/days the instance does not know."""


@dataclass(frozen=True)
class Instance:
    items: Tuple[str, ...]
    stores: Tuple[str, ...]
    categories: Dict[str, Tuple[str, ...]]
    labour_capacity: Dict[str, int]
    inventory: Dict[str, int]
    trailer_max: int
    trailer_min: int
    max_trailers: Dict[str, int]
    demand: Dict[Cell, int]
    store_priority: Dict[str, int]
    alpha: Tuple[Fraction, ...]
    beta: Fraction
    gamma: Fraction
    # pairs missing from shelf_capacity are unconstrained
    shelf_capacity: Dict[Pair, int] = field(default_factory=dict)
    # pairs missing from horizon may use every day alpha covers
    horizon: Dict[Pair, int] = field(default_factory=dict)
    # cells missing from item_store_priority have q = 1
    item_store_priority: Dict[Cell, Fraction] = field(default_factory=dict)

    @property
    def max_day(self) -> int:
        return len(self.alpha) - 1

    def horizon_of(self, item: str, store: str) -> int:
        return self.horizon.get((item, store), self.max_day)

    def q(self, item: str, store: str, day: int) -> Fraction:
        return self.item_store_priority.get((item, store, day), ONE)

    def profit(self, item: str, store: str, day: int) -> Fraction:
        """Unit utility ``alpha[t] * q`` of allocating ``item`` to ``store`` for ``day``."""
        return self.alpha[day] * self.q(item, store, day)

    def category_of(self) -> Dict[str, str]:
        return {i: l for l, members in self.categories.items() for i in members}

    def demand_by_pair(self) -> Dict[Pair, Dict[int, int]]:
        out: Dict[Pair, Dict[int, int]] = defaultdict(dict)
        for (i, j, t), qty in self.demand.items():
            out[(i, j)][t] = qty
        return dict(out)

    def max_allocation_utility(self) -> Fraction:
        """Upper bound on the allocation term: every demand cell filled."""
        return sum((self.profit(i, j, t) * qty for (i, j, t), qty in self.demand.items()), Fraction(0))


class TrailerAssignment:
    """Trailers per store (``x_j``). Stores not mentioned carry zero trailers."""

    __slots__ = ("_x",)

    def __init__(self, counts: Optional[Mapping[str, int]] = None):
        self._x: Dict[str, int] = {j: int(c) for j, c in (counts or {}).items() if c}
        if any(c < 0 for c in self._x.values()):
            raise ValueError("trailer counts must be non-negative")

    def __getitem__(self, store: str) -> int:
        return self._x.get(store, 0)

    def y(self, store: str) -> int:
        return min(1, self[store])

    def items(self):
        return sorted(self._x.items())

    def total(self) -> int:
        return sum(self._x.values())

    def increment(self, store: str, by: int = 1) -> "TrailerAssignment":
        counts = dict(self._x)
        counts[store] = counts.get(store, 0) + by
        return TrailerAssignment(counts)

    def key(self) -> Tuple[Tuple[str, int], ...]:
        return tuple(self.items())

    def as_dict(self) -> Dict[str, int]:
        return dict(self._x)

    def __eq__(self, other) -> bool:
        return isinstance(other, TrailerAssignment) and self._x == other._x

    def __le__(self, other: "TrailerAssignment") -> bool:
        return all(c <= other[j] for j, c in self._x.items())

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"TrailerAssignment({dict(self.items())})"


@dataclass(frozen=True)
class AllocationPlan:
    d: Dict[Cell, Fraction]
    b: Dict[str, Fraction] = field(default_factory=dict)
    objective_value: Optional[Fraction] = None

    @classmethod
    def empty(cls) -> "AllocationPlan":
        return cls({}, {})

    def s_pair(self) -> Dict[Pair, Fraction]:
        out: Dict[Pair, Fraction] = defaultdict(Fraction)
        for (i, j, _t), v in self.d.items():
            out[(i, j)] += v
        return dict(out)

    def s_store(self) -> Dict[str, Fraction]:
        out: Dict[str, Fraction] = defaultdict(Fraction)
        for (_i, j, _t), v in self.d.items():
            out[j] += v
        return dict(out)

    def s_item(self) -> Dict[str, Fraction]:
        out: Dict[str, Fraction] = defaultdict(Fraction)
        for (i, _j, _t), v in self.d.items():
            out[i] += v
        return dict(out)

    def total(self) -> Fraction:
        return sum(self.d.values(), Fraction(0))


@dataclass(frozen=True)
class Violation:
    constraint: str
    where: str
    amount: Fraction

    def __str__(self) -> str:
        return f"{self.constraint} at {self.where}: violated by {self.amount}"


@dataclass(frozen=True)
class PlanMetrics:
    labour_utilization: Dict[str, float]
    overall_labour_utilization: float
    trailer_utilization: float
    total_allocation: Fraction
    trailer_count: int
    ltmc_breach_count: int
    total_breach: Fraction
    integrality_fraction: float
    mean_pf_dos: Optional[float]


def validate_instance(inst: Instance) -> List[str]:
    """Return every violated instance invariant; an empty list means valid."""
    errs: List[str] = []
    items, stores = set(inst.items), set(inst.stores)
    if len(items) != len(inst.items):
        errs.append("items: duplicate ids")
    if len(stores) != len(inst.stores):
        errs.append("stores: duplicate ids")

    seen: Dict[str, str] = {}
    for l, members in inst.categories.items():
        for i in members:
            if i not in items:
                errs.append(f"categories[{l}]: unknown item {i!r}")
            elif i in seen:
                errs.append(f"categories[{l}]: item {i!r} already in category {seen[i]!r}")
            else:
                seen[i] = l
    for i in inst.items:
        if i not in seen:
            errs.append(f"categories: item {i!r} belongs to no category")

    for l in inst.categories:
        h = inst.labour_capacity.get(l)
        if h is None:
            errs.append(f"labour_capacity[{l}]: missing")
        elif h < 0:
            errs.append(f"labour_capacity[{l}]: negative ({h})")
    for l in inst.labour_capacity:
        if l not in inst.categories:
            errs.append(f"labour_capacity[{l}]: unknown category")

    for i in inst.items:
        s = inst.inventory.get(i)
        if s is None:
            errs.append(f"inventory[{i}]: missing")
        elif s < 0:
            errs.append(f"inventory[{i}]: negative ({s})")

    if inst.trailer_max <= 0:
        errs.append(f"trailer_max: must be positive ({inst.trailer_max})")
    if inst.trailer_min < 0:
        errs.append(f"trailer_min: negative ({inst.trailer_min})")
    if inst.trailer_min > inst.trailer_max:
        errs.append(f"trailer_min exceeds trailer_max ({inst.trailer_min} > {inst.trailer_max})")

    for j in inst.stores:
        r = inst.max_trailers.get(j)
        if r is None:
            errs.append(f"max_trailers[{j}]: missing")
        elif r < 0:
            errs.append(f"max_trailers[{j}]: negative ({r})")
        p = inst.store_priority.get(j)
        if p is None:
            errs.append(f"store_priority[{j}]: missing")
        elif p <= 0:
            errs.append(f"store_priority[{j}]: must be positive ({p})")

    if not inst.alpha:
        errs.append("alpha: empty")
    for t, a in enumerate(inst.alpha):
        if a <= 0:
            errs.append(f"alpha[{t}]: must be positive ({a})")
        if t and not a < inst.alpha[t - 1]:
            errs.append(f"alpha[{t}]: non-decreasing alpha ({inst.alpha[t - 1]} -> {a})")
    if inst.beta <= 0:
        errs.append(f"beta: must be positive ({inst.beta})")
    if inst.gamma < 0:
        errs.append(f"gamma: negative ({inst.gamma})")

    for (i, j), c in inst.shelf_capacity.items():
        if i not in items or j not in stores:
            errs.append(f"shelf_capacity[{i},{j}]: unknown item/store")
        if c < 0:
            errs.append(f"shelf_capacity[{i},{j}]: negative ({c})")
    for (i, j), h in inst.horizon.items():
        if i not in items or j not in stores:
            errs.append(f"horizon[{i},{j}]: unknown item/store")
        if not 0 <= h <= inst.max_day:
            errs.append(f"horizon[{i},{j}]: {h} outside alpha range 0..{inst.max_day}")
    for (i, j, t), qty in inst.demand.items():
        if i not in items or j not in stores:
            errs.append(f"demand[{i},{j},{t}]: unknown item/store")
            continue
        if not 0 <= t <= inst.horizon_of(i, j):
            errs.append(f"demand[{i},{j},{t}]: day outside horizon 0..{inst.horizon_of(i, j)}")
        if qty < 0:
            errs.append(f"demand[{i},{j},{t}]: negative ({qty})")
    for (i, j, t), q in inst.item_store_priority.items():
        if i not in items or j not in stores or not 0 <= t <= inst.max_day:
            errs.append(f"item_store_priority[{i},{j},{t}]: unknown cell")
        if q < 0:
            errs.append(f"item_store_priority[{i},{j},{t}]: negative ({q})")
    return errs


def check_regime(inst: Instance) -> None:
    """Warn when ``gamma <= beta``; the model is meant for ``gamma > beta``."""
    if inst.gamma <= inst.beta:
        warnings.warn(f"gamma ({inst.gamma}) <= beta ({inst.beta}): outside the intended regime", stacklevel=2)


def _check_dims(inst: Instance, x: TrailerAssignment, plan: AllocationPlan) -> None:
    items, stores = set(inst.items), set(inst.stores)
    for (i, j, t) in plan.d:
        if i not in items or j not in stores or not 0 <= t <= inst.max_day:
            raise DimensionError(f"plan cell {(i, j, t)} not in instance")
    for j in list(plan.b) + [j for j, _ in x.items()]:
        if j not in stores:
            raise DimensionError(f"unknown store {j!r}")


def allocation_utility(inst: Instance, plan: AllocationPlan) -> Fraction:
    return sum((inst.profit(i, j, t) * v for (i, j, t), v in plan.d.items()), Fraction(0))


def evaluate_objective(inst: Instance, x: TrailerAssignment, plan: AllocationPlan) -> Fraction:
    """Allocation utility plus store-priority utility minus the cost of loading trailers below the minimum."""
    _check_dims(inst, x, plan)
    trailers = sum((inst.store_priority[j] * c for j, c in x.items()), 0)
    breach = sum(plan.b.values(), Fraction(0))
    return allocation_utility(inst, plan) + inst.beta * trailers - inst.gamma * breach


def check_feasibility(inst: Instance, x: TrailerAssignment, plan: AllocationPlan) -> List[Violation]:
    _check_dims(inst, x, plan)
    out: List[Violation] = []
    M, m = inst.trailer_max, inst.trailer_min
    s_pair, s_store, s_item = plan.s_pair(), plan.s_store(), plan.s_item()

    for i in inst.items:
        over = s_item.get(i, 0) - inst.inventory[i]
        if over > 0:
            out.append(Violation("inventory", i, Fraction(over)))

    for l, members in inst.categories.items():
        over = sum((s_item.get(i, 0) for i in members), Fraction(0)) - inst.labour_capacity[l]
        if over > 0:
            out.append(Violation("labour", l, over))

    for j in inst.stores:
        xj, yj = x[j], x.y(j)
        if xj > inst.max_trailers[j]:
            out.append(Violation("planned-trailers", j, Fraction(xj - inst.max_trailers[j])))
        sj = s_store.get(j, Fraction(0))
        bj = plan.b.get(j, Fraction(0))
        if sj > M * xj:
            out.append(Violation("max-capacity", j, sj - M * xj))
        short = M * (xj - yj) + m * yj - bj - sj
        if short > 0:
            out.append(Violation("min-capacity", j, Fraction(short)))
        if bj < 0:
            out.append(Violation("breach-bound", j, -bj))
        if bj > m:
            out.append(Violation("breach-bound", j, bj - m))

    for (i, j), v in s_pair.items():
        cap = inst.shelf_capacity.get((i, j))
        if cap is not None and v > cap:
            out.append(Violation("shelf-capacity", f"{i}@{j}", v - cap))

    for (i, j, t), v in plan.d.items():
        if v < 0:
            out.append(Violation("demand", f"{i}@{j}/{t}", -v))
        elif v > inst.demand.get((i, j, t), 0):
            out.append(Violation("demand", f"{i}@{j}/{t}", v - inst.demand.get((i, j, t), 0)))
    return out


def pf_dos(plan: AllocationPlan) -> Dict[Pair, int]:
    """Days of supply of pairs with pull-forward allocation: last day with positive allocation."""
    last: Dict[Pair, int] = {}
    for (i, j, t), v in plan.d.items():
        if t >= 1 and v > 0:
            last[(i, j)] = max(t, last.get((i, j), 0))
    return last


def compute_metrics(inst: Instance, x: TrailerAssignment, plan: AllocationPlan) -> PlanMetrics:
    s_item = plan.s_item()
    labour = {}
    for l, members in inst.categories.items():
        used = sum((s_item.get(i, 0) for i in members), Fraction(0))
        h = inst.labour_capacity[l]
        labour[l] = float(used / h) if h else 0.0
    total = plan.total()
    h_total = sum(inst.labour_capacity.values())
    trailers = x.total()
    nonzero = [v for v in plan.d.values() if v != 0]
    integral = sum(1 for v in nonzero if Fraction(v).denominator == 1)
    dos = pf_dos(plan)
    return PlanMetrics(
        labour_utilization=labour,
        overall_labour_utilization=float(total / h_total) if h_total else 0.0,
        trailer_utilization=float(total / (inst.trailer_max * trailers)) if trailers else 0.0,
        total_allocation=total,
        trailer_count=trailers,
        ltmc_breach_count=sum(1 for v in plan.b.values() if v > 0),
        total_breach=sum(plan.b.values(), Fraction(0)),
        integrality_fraction=integral / len(nonzero) if nonzero else 1.0,
        mean_pf_dos=sum(dos.values()) / len(dos) if dos else None,
    )


def lcm_denominator(values: Iterable[Fraction]) -> int:
    out = 1
    for v in values:
        out = math.lcm(out, Fraction(v).denominator)
    return out
