"""Batched stochastic greedy trailer assignment and the diminishing-returns audit.

The objective splits as ``f(x) = g(x) + beta * sum_j p_j x_j`` where ``g`` is
the optimal allocation value for fixed trailers (a value oracle) and the
second term is modular. Stores are processed in batches of equal priority,
highest first; within a batch a trailer goes to the sampled store with the
largest positive incremental gain until no sampled store has one.
"""

from __future__ import annotations

import heapq
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import groupby
from typing import Callable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np

from .drm import DrmOracle
from .exact import ExactOracle, final_allocate
from .model import AllocationPlan, Instance, PlanMetrics, TrailerAssignment, compute_metrics
from .reduction import Variant

log = logging.getLogger(__name__)

Number = Union[Fraction, float]
Oracle = Callable[..., Number]


@dataclass(frozen=True)
class PlannerConfig:
    rho: float = 1.0
    oracle: Literal["exact", "drm"] = "exact"
    variant: Variant = "final"
    seed: int = 0
    parallel_candidates: bool = False
    lazy: bool = False
    mu: float = 1.0
    drm_eps: float = 1e-6
    drm_max_iter: int = 10_000

    def __post_init__(self):
        if not 0 < self.rho <= 1:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if self.oracle not in ("exact", "drm"):
            raise ValueError(f"unknown oracle {self.oracle!r}")
        if self.variant not in ("probe", "final"):
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass(frozen=True)
class GainRecord:
    store: str
    g_gain: Number
    total_gain: Number
    value: Number


@dataclass
class DecisionPoint:
    """One call of :func:`next_best_store`, kept for later inspection."""

    x: TrailerAssignment
    candidates: Tuple[str, ...]
    sampled: Tuple[str, ...]
    records: List[GainRecord]
    best: Optional[str]


def make_oracle(inst: Instance, cfg: PlannerConfig):
    if cfg.oracle == "exact":
        return ExactOracle(inst, cfg.variant)
    return DrmOracle(inst, cfg.variant, mu=cfg.mu, eps=cfg.drm_eps, max_iter=cfg.drm_max_iter)


def _modular(inst: Instance, store: str, like: Number) -> Number:
    h = inst.beta * inst.store_priority[store]
    return float(h) if isinstance(like, float) else h


def gain_record(inst: Instance, oracle: Oracle, x: TrailerAssignment, k: str, base: Optional[Number] = None) -> GainRecord:
    """Incremental gain of one more trailer at ``k``; ``-inf`` when the result is infeasible."""
    if base is None:
        base = oracle(x)
    value = oracle(x.increment(k), parent=x)
    if value == -math.inf or base == -math.inf:
        g = -math.inf
        return GainRecord(k, g, g, value)
    g = value - base
    return GainRecord(k, g, g + _modular(inst, k, g), value)


def sample_candidates(candidates: Sequence[str], rho: float, rng: np.random.Generator) -> List[str]:
    """Independent Bernoulli(rho) draw; one uniform pick when the draw is empty."""
    cands = sorted(candidates)
    if rho >= 1 or not cands:
        return cands
    keep = rng.random(len(cands)) < rho
    if not keep.any():
        keep[rng.integers(len(cands))] = True
    return [c for c, k in zip(cands, keep) if k]


def next_best_store(
    x: TrailerAssignment,
    candidates: Sequence[str],
    cfg: PlannerConfig,
    oracle: Oracle,
    inst: Instance,
    rng: Optional[np.random.Generator] = None,
    trace: Optional[List[DecisionPoint]] = None,
) -> Tuple[Optional[str], set]:
    """Best sampled store for the next trailer and the sampled stores with no positive gain."""
    if not candidates:
        return None, set()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    sampled = sample_candidates(candidates, cfg.rho, rng)
    base = oracle(x)
    if cfg.parallel_candidates and len(sampled) > 1:
        with ThreadPoolExecutor() as pool:
            records = list(pool.map(lambda k: gain_record(inst, oracle, x, k, base), sampled))
    else:
        records = [gain_record(inst, oracle, x, k, base) for k in sampled]
    pruned = {r.store for r in records if not r.total_gain > 0}
    best: Optional[str] = None
    top = None
    for r in records:  # sorted by store id, so a strict > keeps the smallest id on ties
        if r.total_gain > 0 and (top is None or r.total_gain > top):
            best, top = r.store, r.total_gain
    if trace is not None:
        trace.append(DecisionPoint(x, tuple(sorted(candidates)), tuple(sampled), records, best))
    return best, pruned


def priority_batches(inst: Instance) -> List[List[str]]:
    """Stores grouped by priority, highest priority first, ids sorted within a batch."""
    order = sorted(inst.stores, key=lambda j: (-inst.store_priority[j], j))
    return [list(g) for _, g in groupby(order, key=lambda j: inst.store_priority[j])]


def _lazy_batch(inst, oracle, x, batch) -> TrailerAssignment:
    # heap of (-upper bound, store, x version the bound was computed at)
    R = inst.max_trailers
    version = 0
    heap = []
    for k in batch:
        if x[k] < R[k]:
            heap.append((-math.inf, k, -1))  # not yet evaluated: treat as unbounded
    heapq.heapify(heap)
    while heap:
        neg, k, ver = heapq.heappop(heap)
        if ver == version:
            if not -neg > 0:
                break  # every remaining bound is at most this gain
            x = x.increment(k)
            version += 1
            if x[k] < R[k]:
                heapq.heappush(heap, (neg, k, -1))
            continue
        rec = gain_record(inst, oracle, x, k)
        if not rec.total_gain > 0:
            continue  # pruned for the rest of the batch
        heapq.heappush(heap, (-rec.total_gain, k, version))
    return x


def plan_trailers(
    inst: Instance,
    cfg: PlannerConfig,
    oracle: Optional[Oracle] = None,
    trace: Optional[List[DecisionPoint]] = None,
) -> TrailerAssignment:
    """Greedy trailer vector; ``x_j <= R_j`` always holds."""
    oracle = oracle if oracle is not None else make_oracle(inst, cfg)
    rng = np.random.default_rng(cfg.seed)
    lazy = cfg.lazy and cfg.rho >= 1
    if cfg.lazy and not lazy:
        log.warning("lazy evaluation needs rho = 1; falling back to plain sampling")
    x = TrailerAssignment()
    for batch in priority_batches(inst):
        if lazy:
            x = _lazy_batch(inst, oracle, x, batch)
            continue
        live = [j for j in batch if x[j] < inst.max_trailers[j]]
        while live:
            best, pruned = next_best_store(x, live, cfg, oracle, inst, rng, trace)
            live = [j for j in live if j not in pruned]
            if best is None:
                continue  # every sampled store was pruned
            x = x.increment(best)
            if x[best] >= inst.max_trailers[best]:
                live = [j for j in live if j != best]
    return x


def full_solve(
    inst: Instance,
    cfg: PlannerConfig,
    oracle: Optional[Oracle] = None,
    stats: Optional[dict] = None,
) -> Tuple[TrailerAssignment, AllocationPlan, PlanMetrics]:
    """Greedy trailers, then the exact integral allocation for them, then metrics."""
    oracle = oracle if oracle is not None else make_oracle(inst, cfg)
    x = plan_trailers(inst, cfg, oracle)
    plan = final_allocate(inst, x)
    if stats is not None:
        stats["oracle_calls"] = getattr(oracle, "calls", None)
        stats["drm_failures"] = getattr(oracle, "failures", 0)
    return x, plan, compute_metrics(inst, x, plan)


@dataclass
class AuditResult:
    differences: List[Fraction]
    triplets: List[Tuple[TrailerAssignment, TrailerAssignment, str]]
    modular_differences: List[Fraction] = field(default_factory=list)

    @property
    def minimum(self) -> Optional[Fraction]:
        return min(self.differences) if self.differences else None

    def normalised(self) -> List[float]:
        scale = max((abs(d) for d in self.differences), default=0)
        return [float(d / scale) if scale else 0.0 for d in self.differences]


class SamplingExhausted(RuntimeError):
    pass


def gain_difference(oracle: Oracle, X: TrailerAssignment, Y: TrailerAssignment, k: str) -> Optional[Fraction]:
    """``g_X(k) - g_Y(k)``, or ``None`` when any of the four values is infeasible."""
    vals = [oracle(X), oracle(X.increment(k)), oracle(Y), oracle(Y.increment(k))]
    if any(v == -math.inf for v in vals):
        return None
    return (vals[1] - vals[0]) - (vals[3] - vals[2])


def audit_submodularity(
    inst: Instance,
    n_triplets: int,
    seed: int = 0,
    oracle: Optional[Oracle] = None,
    max_tries: Optional[int] = None,
) -> AuditResult:
    """Sample ``X <= Y`` and ``k`` with every value feasible; collect ``g_X(k) - g_Y(k)``."""
    oracle = oracle if oracle is not None else ExactOracle(inst, "final")
    rng = np.random.default_rng(seed)
    stores = sorted(inst.stores)
    R = np.array([inst.max_trailers[j] for j in stores])
    open_k = [n for n, r in enumerate(R) if r > 0]
    if not open_k:
        raise SamplingExhausted("no store can take a trailer")
    max_tries = max_tries if max_tries is not None else 50 * n_triplets + 100
    out = AuditResult([], [])
    tries = 0
    while len(out.differences) < n_triplets:
        tries += 1
        if tries > max_tries:
            raise SamplingExhausted(f"found {len(out.differences)} of {n_triplets} feasible triplets in {max_tries} draws")
        k = open_k[rng.integers(len(open_k))]
        top = R.copy()
        top[k] -= 1
        y = rng.integers(0, top + 1)
        xv = rng.integers(0, y + 1)
        Y = TrailerAssignment({j: int(v) for j, v in zip(stores, y)})
        X = TrailerAssignment({j: int(v) for j, v in zip(stores, xv)})
        diff = gain_difference(oracle, X, Y, stores[k])
        if diff is None:
            continue
        out.differences.append(diff)
        out.triplets.append((X, Y, stores[k]))
        p = inst.beta * inst.store_priority[stores[k]]
        out.modular_differences.append(p - p)
    return out
