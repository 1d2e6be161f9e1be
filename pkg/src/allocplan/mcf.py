"""Integral min-cost flow for balanced transport networks.

Primal-dual successive shortest paths: Dijkstra on reduced costs to update
node potentials, then a Dinic blocking flow over the zero-reduced-cost arcs.
Costs are exact integers, so the returned flow is an exact optimum and, with
integer capacities, integral.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Tuple

from .model import lcm_denominator
from .reduction import CotInstance


class InfeasibleFlowError(RuntimeError):
    """The network cannot route its full supply."""


@dataclass(frozen=True)
class FlowNetwork:
    """Bipartite transport network.

    ``arcs`` are ``(source, sink, capacity, unit_profit)``; a super-source
    feeds every source up to its supply and every sink drains into a
    super-sink up to its need.
    """

    supplies: Tuple[int, ...]
    needs: Tuple[int, ...]
    arcs: Tuple[Tuple[int, int, int, Fraction], ...]

    @classmethod
    def from_cot(cls, cot: CotInstance) -> "FlowNetwork":
        return cls(
            tuple(cot.supplies),
            tuple(cot.needs),
            tuple(zip(cot.src, cot.snk, cot.cap, cot.profit)),
        )

    @property
    def total(self) -> int:
        return sum(self.supplies)

    def arc_list(self) -> List[dict]:
        return [{"source": a, "sink": b, "cap": c, "profit": str(p)} for a, b, c, p in self.arcs]


@dataclass(frozen=True)
class FlowResult:
    flow: Tuple[int, ...]
    profit: Fraction
    augmentations: int


def solve_mcmf(net: FlowNetwork) -> FlowResult:
    """Maximum-profit flow that ships every supply unit and fills every need."""
    n_src, n_snk = len(net.supplies), len(net.needs)
    total = net.total
    if total != sum(net.needs):
        raise InfeasibleFlowError(f"unbalanced network: supply {total} != need {sum(net.needs)}")
    if any(c < 0 for _, _, c, _ in net.arcs):
        raise ValueError("negative arc capacity")

    scale = lcm_denominator(p for *_, p in net.arcs)
    top = max((p for *_, p in net.arcs), default=Fraction(0))
    # every source-to-sink path uses exactly one cell arc, so shifting all cell
    # costs by the same constant leaves the optimum unchanged
    cell_cost = [int((top - p) * scale) for *_, p in net.arcs]

    S, T = 0, n_src + n_snk + 1
    N = T + 1
    head: List[int] = []
    cap: List[int] = []
    cost: List[int] = []
    adj: List[List[int]] = [[] for _ in range(N)]

    def add_arc(u: int, v: int, c: int, w: int) -> int:
        e = len(head)
        head.extend((v, u))
        cap.extend((c, 0))
        cost.extend((w, -w))
        adj[u].append(e)
        adj[v].append(e + 1)
        return e

    for a, s in enumerate(net.supplies):
        if s:
            add_arc(S, 1 + a, s, 0)
    cell_arc = []
    for (a, b, c, _), w in zip(net.arcs, cell_cost):
        cell_arc.append(add_arc(1 + a, 1 + n_src + b, c, w) if c else -1)
    for b, need in enumerate(net.needs):
        if need:
            add_arc(1 + n_src + b, T, need, 0)

    pot = [0] * N
    INF = float("inf")
    sent = 0
    augmentations = 0
    while sent < total:
        dist = [INF] * N
        dist[S] = 0
        heap = [(0, S)]
        while heap:
            du, u = heapq.heappop(heap)
            if du > dist[u]:
                continue
            pu = pot[u]
            for e in adj[u]:
                if cap[e] > 0:
                    v = head[e]
                    nd = du + cost[e] + pu - pot[v]
                    if nd < dist[v]:
                        dist[v] = nd
                        heapq.heappush(heap, (nd, v))
        if dist[T] == INF:
            raise InfeasibleFlowError(f"only {sent} of {total} units can be routed")
        dt = dist[T]
        for v in range(N):
            pot[v] += dist[v] if dist[v] < dt else dt

        while sent < total:
            level = [-1] * N
            level[S] = 0
            queue = [S]
            for u in queue:
                for e in adj[u]:
                    v = head[e]
                    if cap[e] > 0 and level[v] < 0 and cost[e] + pot[u] - pot[v] == 0:
                        level[v] = level[u] + 1
                        queue.append(v)
            if level[T] < 0:
                break
            it = [0] * N
            while sent < total:
                path: List[int] = []
                u = S
                while u != T:
                    edges = adj[u]
                    k = it[u]
                    while k < len(edges):
                        e = edges[k]
                        v = head[e]
                        if cap[e] > 0 and level[v] == level[u] + 1 and cost[e] + pot[u] - pot[v] == 0:
                            break
                        k += 1
                    it[u] = k
                    if k < len(edges):
                        path.append(edges[k])
                        u = head[edges[k]]
                    elif u == S:
                        break
                    else:
                        level[u] = -1
                        e = path.pop()
                        u = head[e ^ 1]
                        it[u] += 1
                if u != T:
                    break
                f = min(cap[e] for e in path)
                f = min(f, total - sent)
                for e in path:
                    cap[e] -= f
                    cap[e ^ 1] += f
                sent += f
                augmentations += 1

    flow = tuple(cap[e ^ 1] if e >= 0 else 0 for e in cell_arc)
    profit = sum((p * f for (_, _, _, p), f in zip(net.arcs, flow) if f), Fraction(0))
    return FlowResult(flow, profit, augmentations)
