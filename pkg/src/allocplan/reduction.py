"""Fixed-trailer allocation LP as a balanced capacity-constrained transport problem.

For a fixed trailer vector the allocation problem is rewritten with pseudo
sources and sinks so that every constraint becomes either a per-cell cap,
a source supply or a sink need:

* ``b`` (breach) source: fills store capacity below the trailer minimum at
  unit profit ``-gamma``.
* ``z`` (filler) source: free fill of the last trailer, at most ``M - m`` per
  store, so that real allocation ``s_j`` lands in ``[M(x_j-1)+m-b_j, M x_j]``.
* ``h:<l>`` (labour) sinks: soak up ``max(0, A_l - H_l)`` units of category
  ``l`` so at most ``H_l`` of it reaches real stores.
* ``e`` (surplus) sink: absorbs whatever is left so supplies and needs balance.

Cells with no natural upper bound get the supply of their source as cap; no
flow can exceed it so the substitution is loss-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from .model import AllocationPlan, Instance, TrailerAssignment

Variant = Literal["probe", "final"]

ITEM, BREACH, FILLER = "item", "breach", "filler"
STORE, LABOUR, SURPLUS = "store", "labour", "surplus"


class ReductionError(ValueError):
    pass


class UnbalancedFlowError(ValueError):
    pass


def trim_shelf_capacity(inst: Instance) -> Instance:
    """Fold shelf capacities into the demand caps.

    Where a pair's total demand exceeds its shelf capacity, demand is removed
    from the least profitable day first (ties: latest day first) until the
    total fits. With ``alpha[t] * q`` decreasing in ``t`` this is exactly
    back-to-front trimming. Any optimum can be moved onto the kept days of its
    pair without changing feasibility, so the optimal value is unchanged.
    """
    if not inst.shelf_capacity:
        return inst
    demand = dict(inst.demand)
    for (i, j), days in inst.demand_by_pair().items():
        cap = inst.shelf_capacity.get((i, j))
        if cap is None:
            continue
        excess = sum(days.values()) - cap
        if excess <= 0:
            continue
        for t in sorted(days, key=lambda t: (inst.profit(i, j, t), -t)):
            cut = min(excess, demand[(i, j, t)])
            demand[(i, j, t)] -= cut
            excess -= cut
            if not demand[(i, j, t)]:
                del demand[(i, j, t)]
            if not excess:
                break
    return replace(inst, demand=demand)


@dataclass(frozen=True)
class CotInstance:
    """Balanced transport problem with per-cell caps.

    Cells are parallel sequences: ``src[c]``, ``snk[c]``, ``day[c]``,
    ``cap[c]`` (int) and ``profit[c]`` (Fraction).
    """

    source_ids: Tuple[str, ...]
    source_kinds: Tuple[str, ...]
    supplies: Tuple[int, ...]
    sink_ids: Tuple[str, ...]
    sink_kinds: Tuple[str, ...]
    needs: Tuple[int, ...]
    src: Tuple[int, ...]
    snk: Tuple[int, ...]
    day: Tuple[int, ...]
    cap: Tuple[int, ...]
    profit: Tuple[Fraction, ...]
    variant: str = "final"
    gamma: Fraction = Fraction(0)

    @property
    def total_mass(self) -> int:
        return sum(self.supplies)

    @property
    def n_cells(self) -> int:
        return len(self.src)

    def counted_cells(self) -> List[int]:
        """Cells whose profit belongs to the allocation value: real cells and breach cells into stores."""
        return [
            c
            for c in range(self.n_cells)
            if self.sink_kinds[self.snk[c]] == STORE and self.source_kinds[self.src[c]] in (ITEM, BREACH)
        ]

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "total_mass": self.total_mass,
            "sources": [
                {"id": s, "kind": k, "supply": v} for s, k, v in zip(self.source_ids, self.source_kinds, self.supplies)
            ],
            "sinks": [{"id": s, "kind": k, "need": v} for s, k, v in zip(self.sink_ids, self.sink_kinds, self.needs)],
            "cells": [
                {
                    "source": self.source_ids[a],
                    "sink": self.sink_ids[b],
                    "day": t,
                    "cap": c,
                    "profit": str(p),
                }
                for a, b, t, c, p in zip(self.src, self.snk, self.day, self.cap, self.profit)
            ],
        }


@dataclass
class CotTemplate:
    """Everything about the transport problem that does not depend on ``x``.

    Built once per (instance, variant); :meth:`instantiate` fills in store
    needs, the surplus need and the breach supply for a trailer vector.
    """

    inst: Instance
    variant: str
    source_ids: Tuple[str, ...]
    source_kinds: Tuple[str, ...]
    base_supplies: Tuple[int, ...]
    sink_ids: Tuple[str, ...]
    sink_kinds: Tuple[str, ...]
    labour_needs: Tuple[int, ...]
    src: Tuple[int, ...]
    snk: Tuple[int, ...]
    day: Tuple[int, ...]
    base_cap: Tuple[int, ...]
    profit: Tuple[Fraction, ...]
    store_sink: Dict[str, int]
    breach_source: int
    filler_source: int
    surplus_sink: int
    # cells whose cap tracks the (x-dependent) breach supply
    zeta_cells: Tuple[int, ...]
    _arrays: Optional[dict] = field(default=None, repr=False)

    @classmethod
    def build(cls, inst: Instance, variant: Variant = "final") -> "CotTemplate":
        if variant not in ("probe", "final"):
            raise ValueError(f"unknown variant {variant!r}")
        M, m = inst.trailer_max, inst.trailer_min
        if not 0 <= m <= M:
            raise ReductionError(f"trailer bounds must satisfy 0 <= m <= M, got m={m}, M={M}")
        n_stores = len(inst.stores)

        source_ids = list(inst.items) + ["b", "z"]
        source_kinds = [ITEM] * len(inst.items) + [BREACH, FILLER]
        s_b = M if variant == "probe" else m * n_stores
        supplies = [inst.inventory[i] for i in inst.items] + [s_b, (M - m) * n_stores]
        b_src, z_src = len(inst.items), len(inst.items) + 1
        item_src = {i: k for k, i in enumerate(inst.items)}

        cats = list(inst.categories)
        sink_ids = list(inst.stores) + [f"h:{l}" for l in cats] + ["e"]
        sink_kinds = [STORE] * n_stores + [LABOUR] * len(cats) + [SURPLUS]
        store_sink = {j: k for k, j in enumerate(inst.stores)}
        e_snk = len(sink_ids) - 1
        labour_needs = []
        for l in cats:
            a_l = sum(inst.inventory[i] for i in inst.categories[l])
            labour_needs.append(max(0, a_l - inst.labour_capacity[l]))

        src: List[int] = []
        snk: List[int] = []
        day: List[int] = []
        cap: List[int] = []
        profit: List[Fraction] = []

        def add(a: int, b: int, t: int, c: int, p: Fraction) -> None:
            src.append(a)
            snk.append(b)
            day.append(t)
            cap.append(c)
            profit.append(p)

        for (i, j, t), qty in sorted(inst.demand.items()):
            if qty > 0 and inst.inventory[i] > 0:
                add(item_src[i], store_sink[j], t, qty, inst.profit(i, j, t))
        breach_cells = []
        if m > 0 or variant == "probe":
            for j in inst.stores:
                if variant == "probe":
                    breach_cells.append(len(src))
                add(b_src, store_sink[j], 0, m if variant == "final" else s_b, -inst.gamma)
        if M > m:
            for j in inst.stores:
                add(z_src, store_sink[j], 0, M - m, Fraction(0))
        for k, l in enumerate(cats):
            if labour_needs[k] > 0:
                for i in inst.categories[l]:
                    if inst.inventory[i] > 0:
                        add(item_src[i], n_stores + k, 0, inst.inventory[i], Fraction(0))
        for a, supply in enumerate(supplies):
            if supply > 0 or a == b_src:
                if a == b_src:
                    breach_cells.append(len(src))
                add(a, e_snk, 0, supply, Fraction(0))

        return cls(
            inst=inst,
            variant=variant,
            source_ids=tuple(source_ids),
            source_kinds=tuple(source_kinds),
            base_supplies=tuple(supplies),
            sink_ids=tuple(sink_ids),
            sink_kinds=tuple(sink_kinds),
            labour_needs=tuple(labour_needs),
            src=tuple(src),
            snk=tuple(snk),
            day=tuple(day),
            base_cap=tuple(cap),
            profit=tuple(profit),
            store_sink=store_sink,
            breach_source=b_src,
            filler_source=z_src,
            surplus_sink=e_snk,
            zeta_cells=tuple(breach_cells),
        )

    def check_assignment(self, x: TrailerAssignment) -> None:
        for j, c in x.items():
            if j not in self.store_sink:
                raise ReductionError(f"unknown store {j!r}")
            if c > self.inst.max_trailers[j]:
                raise ReductionError(f"store {j!r}: {c} trailers exceeds max_trailers {self.inst.max_trailers[j]}")

    def marginals(self, x: TrailerAssignment) -> Tuple[List[int], List[int]]:
        """Supplies and needs for ``x``, with the surplus/deficit rule applied."""
        self.check_assignment(x)
        M = self.inst.trailer_max
        supplies = list(self.base_supplies)
        needs = [M * x[j] for j in self.inst.stores] + list(self.labour_needs) + [0]
        surplus = sum(supplies) - sum(needs)
        if surplus >= 0:
            needs[-1] = surplus
        else:
            supplies[self.breach_source] -= surplus
        return supplies, needs

    def instantiate(self, x: TrailerAssignment) -> CotInstance:
        supplies, needs = self.marginals(x)
        cap = list(self.base_cap)
        for c in self.zeta_cells:
            cap[c] = supplies[self.breach_source]
        return CotInstance(
            source_ids=self.source_ids,
            source_kinds=self.source_kinds,
            supplies=tuple(supplies),
            sink_ids=self.sink_ids,
            sink_kinds=self.sink_kinds,
            needs=tuple(needs),
            src=self.src,
            snk=self.snk,
            day=self.day,
            cap=tuple(cap),
            profit=self.profit,
            variant=self.variant,
            gamma=self.inst.gamma,
        )

    def arrays(self) -> dict:
        """Cell data as numpy arrays (float profits), computed once."""
        if self._arrays is None:
            self._arrays = {
                "src": np.asarray(self.src, dtype=np.int64),
                "snk": np.asarray(self.snk, dtype=np.int64),
                "cap": np.asarray(self.base_cap, dtype=np.float64),
                "profit": np.asarray([float(p) for p in self.profit], dtype=np.float64),
                "breach_cells": np.asarray(self.zeta_cells, dtype=np.int64),
            }
        return self._arrays


def build_cot(inst: Instance, x: TrailerAssignment, variant: Variant = "final") -> CotInstance:
    """Transport problem for ``x`` on a shelf-trimmed instance.

    ``probe`` uses a single breach pool of ``M`` units with uncapped breach
    cells (cheap to evaluate while growing ``x``, relaxes the per-store bound);
    ``final`` caps each store's breach at ``m`` with a pool of ``m * |J|``.
    A negative surplus is added to the breach pool.
    """
    return CotTemplate.build(inst, variant).instantiate(x)


def extract_plan(cot: CotInstance, flow: Sequence) -> AllocationPlan:
    """Real-cell flows become ``d``; breach-to-store flows become ``b``; pseudo flows are dropped."""
    if len(flow) != cot.n_cells:
        raise UnbalancedFlowError(f"flow has {len(flow)} entries for {cot.n_cells} cells")
    out_src = [Fraction(0)] * len(cot.supplies)
    in_snk = [Fraction(0)] * len(cot.needs)
    d: Dict[Tuple[str, str, int], Fraction] = {}
    b: Dict[str, Fraction] = {}
    for c, f in enumerate(flow):
        f = Fraction(f)
        if f < 0 or f > cot.cap[c]:
            raise UnbalancedFlowError(f"cell {c} flow {f} outside [0, {cot.cap[c]}]")
        a, k = cot.src[c], cot.snk[c]
        out_src[a] += f
        in_snk[k] += f
        if not f or cot.sink_kinds[k] != STORE:
            continue
        if cot.source_kinds[a] == ITEM:
            key = (cot.source_ids[a], cot.sink_ids[k], cot.day[c])
            d[key] = d.get(key, Fraction(0)) + f
        elif cot.source_kinds[a] == BREACH:
            b[cot.sink_ids[k]] = b.get(cot.sink_ids[k], Fraction(0)) + f
    for a, (got, want) in enumerate(zip(out_src, cot.supplies)):
        if got != want:
            raise UnbalancedFlowError(f"source {cot.source_ids[a]!r} ships {got}, supply {want}")
    for k, (got, want) in enumerate(zip(in_snk, cot.needs)):
        if got != want:
            raise UnbalancedFlowError(f"sink {cot.sink_ids[k]!r} receives {got}, need {want}")
    return AllocationPlan(d, b)


@dataclass(frozen=True)
class FeasibleStart:
    cot: CotInstance
    flow: Tuple[Fraction, ...]
    plan: AllocationPlan


def feasible_start(
    inst: Instance, prev_plan: AllocationPlan, x: TrailerAssignment, k: str
) -> FeasibleStart:
    """Explicit feasible point of the probe problem after adding a trailer at ``k``.

    The previous allocation is kept, the whole breach pool (``M`` units) goes to
    ``k``, the filler tops every store up to ``M x_j`` and leftovers go to the
    labour and surplus sinks. Requires the previous plan to load every used
    store to at least ``M(x_j - 1) + m`` without breach.
    """
    M, m = inst.trailer_max, inst.trailer_min
    prev = x.increment(k, -1)
    if prev[k] < 0:
        raise ReductionError(f"x has no trailer at {k!r} to remove")
    if any(v for v in prev_plan.b.values()):
        raise ReductionError("previous plan must not breach trailer minimum")
    s_store = prev_plan.s_store()
    for j in inst.stores:
        need = M * (prev[j] - prev.y(j)) + m * prev.y(j)
        if s_store.get(j, 0) < need:
            raise ReductionError(f"store {j!r}: previous allocation {s_store.get(j, 0)} below {need}")
        if s_store.get(j, 0) > M * prev[j]:
            raise ReductionError(f"store {j!r}: previous allocation exceeds trailer capacity")

    tpl = CotTemplate.build(inst, "probe")
    cot = tpl.instantiate(x)
    flow = [Fraction(0)] * cot.n_cells
    index = {(cot.src[c], cot.snk[c], cot.day[c]): c for c in range(cot.n_cells)}
    item_src = {i: n for n, i in enumerate(inst.items)}
    left = list(map(Fraction, cot.supplies))

    def send(a: int, b: int, t: int, qty) -> None:
        if qty:
            flow[index[(a, b, t)]] += qty
            left[a] -= qty

    for (i, j, t), v in prev_plan.d.items():
        send(item_src[i], tpl.store_sink[j], t, v)
    b_of = {j: (M if j == k else 0) for j in inst.stores}
    for j in inst.stores:
        if x[j]:
            send(tpl.breach_source, tpl.store_sink[j], 0, b_of[j])
            send(tpl.filler_source, tpl.store_sink[j], 0, M * x[j] - s_store.get(j, 0) - b_of[j])
    for n, l in enumerate(inst.categories):
        need = tpl.labour_needs[n]
        for i in inst.categories[l]:
            if need <= 0:
                break
            take = min(need, left[item_src[i]])
            send(item_src[i], len(inst.stores) + n, 0, take)
            need -= take
        if need > 0:
            raise ReductionError(f"labour sink h:{l} cannot be filled")
    for a in range(len(cot.supplies)):
        if left[a]:
            send(a, tpl.surplus_sink, 0, left[a])
    plan = extract_plan(cot, flow)
    return FeasibleStart(cot, tuple(flow), plan)
