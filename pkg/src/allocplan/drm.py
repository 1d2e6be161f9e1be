"""Approximate transport solver by double entropic regularization.

Entropy on both ``d`` and ``D - d`` turns every cell into a logistic of the
two dual potentials: ``d = D * sigmoid(a_i + P/mu + c_j)`` with
``a_i = ln(phi_i)`` and ``c_j = ln(psi_j)``. Fixing the sink potentials, each
source potential is the unique zero of a decreasing scalar function (and vice
versa), so the solver alternates full source and sink sweeps, each a batch of
bracketed root finds. Working with logs keeps ``P = -gamma`` cells finite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.optimize import elementwise
from scipy.sparse.csgraph import connected_components, maximum_flow
from scipy.special import expit

from .model import Instance, TrailerAssignment
from .reduction import BREACH, ITEM, STORE, CotInstance, CotTemplate, Variant, trim_shelf_capacity

log = logging.getLogger(__name__)

MAX_DOUBLINGS = 200


class BracketError(RuntimeError):
    pass


@dataclass(frozen=True)
class RootResult:
    root: float
    value: float
    bracketed: bool
    iterations: int


def expand_bracket(f: Callable[[float], float], center: float = 0.0) -> Tuple[float, float]:
    """Grow ``[center - 2^k, center + 2^k]`` until ``f`` changes sign."""
    for k in range(MAX_DOUBLINGS + 1):
        lo, hi = center - 2.0**k, center + 2.0**k
        if np.sign(f(lo)) != np.sign(f(hi)) or f(lo) == 0 or f(hi) == 0:
            return lo, hi
    raise BracketError(f"no sign change within +-2^{MAX_DOUBLINGS} of {center}")


def root_find_monotone(
    f: Callable[[float], float],
    lo: Optional[float] = None,
    hi: Optional[float] = None,
    root_tol: float = 1e-12,
) -> RootResult:
    """Zero of a monotone scalar function by Brent's method.

    Without a valid bracket one is searched for geometrically around the
    midpoint of ``lo``/``hi`` (or 0). If ``f`` keeps one sign all the way to
    the search limit the endpoint with the smaller ``|f|`` is returned with
    ``bracketed=False``.
    """
    if lo is None or hi is None or np.sign(f(lo)) == np.sign(f(hi)) and f(lo) != 0:
        center = 0.0 if lo is None or hi is None else 0.5 * (lo + hi)
        try:
            lo, hi = expand_bracket(f, center)
        except BracketError:
            lo, hi = center - 2.0**MAX_DOUBLINGS, center + 2.0**MAX_DOUBLINGS
            x = lo if abs(f(lo)) <= abs(f(hi)) else hi
            return RootResult(x, f(x), False, 0)
    if f(lo) == 0:
        return RootResult(lo, 0.0, True, 0)
    if f(hi) == 0:
        return RootResult(hi, 0.0, True, 0)
    x, info = brentq(f, lo, hi, xtol=root_tol, rtol=4 * np.finfo(float).eps, full_output=True)
    return RootResult(x, f(x), True, info.iterations)


@dataclass
class DrmState:
    log_phi: np.ndarray
    log_psi: np.ndarray
    log_kernel: np.ndarray
    mu: float
    residual: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class ScaledCot:
    supplies: np.ndarray
    needs: np.ndarray
    cap: np.ndarray
    src: np.ndarray
    snk: np.ndarray
    profit: np.ndarray


def normalize(cot: CotInstance) -> Tuple[ScaledCot, int]:
    """Divide supplies, needs and caps by the total mass ``K`` (left as is when ``K = 0``)."""
    K = cot.total_mass
    div = float(K) if K else 1.0
    return (
        ScaledCot(
            supplies=np.asarray(cot.supplies, dtype=np.float64) / div,
            needs=np.asarray(cot.needs, dtype=np.float64) / div,
            cap=np.asarray(cot.cap, dtype=np.float64) / div,
            src=np.asarray(cot.src, dtype=np.int64),
            snk=np.asarray(cot.snk, dtype=np.int64),
            profit=np.asarray([float(p) for p in cot.profit], dtype=np.float64),
        ),
        K,
    )


class InfeasibleTransportError(RuntimeError):
    pass


def _presolve(supplies, needs, src, snk, cap):
    """Fix every cell that sits at the same bound in all feasible plans.

    The regularized optimum lies strictly inside ``0 < d < D`` on every cell,
    so it only exists when some feasible plan is strictly inside on every
    cell that is not fixed. One feasible plan comes from a max-flow; in its
    residual graph a (source, sink) pair at a bound can move off it exactly
    when both endpoints share a strongly connected component. Pairs that
    cannot move are fixed; parallel cells of a free pair can all be kept
    strictly inside by splitting the pair flow in proportion to the caps.

    Returns ``(fixed_flow, active_cells, row_target, col_target)`` in whpacks.
    """
    supplies = np.asarray(supplies, dtype=np.int64)
    needs = np.asarray(needs, dtype=np.int64)
    cap = np.asarray(cap, dtype=np.int64)
    n_r, n_c = supplies.size, needs.size
    total = int(supplies.sum())
    if total != int(needs.sum()):
        raise InfeasibleTransportError("unbalanced marginals")
    if max(total, int(cap.max(initial=0))) > np.iinfo(np.int32).max:
        raise InfeasibleTransportError("quantities exceed the 32-bit max-flow range")
    live = cap > 0
    # aggregate parallel cells into one arc per (source, sink) pair
    pair_cap = sparse.coo_array((cap[live], (src[live], snk[live])), shape=(n_r, n_c)).tocsr()
    pair_cap.sum_duplicates()
    pr, pc = pair_cap.nonzero()
    pcap = np.asarray(pair_cap[pr, pc]).ravel().astype(np.int64)

    S, T = n_r + n_c, n_r + n_c + 1
    rows = np.concatenate([np.full(n_r, S), pr, n_r + np.arange(n_c)])
    cols = np.concatenate([np.arange(n_r), n_r + pc, np.full(n_c, T)])
    caps = np.concatenate([supplies, pcap, needs]).astype(np.int32)
    graph = sparse.csr_array((caps, (rows, cols)), shape=(T + 1, T + 1))
    graph.sum_duplicates()
    res = maximum_flow(graph, S, T)
    if res.flow_value != total:
        raise InfeasibleTransportError(f"only {res.flow_value} of {total} units can be routed")
    pflow = np.asarray(res.flow[pr, n_r + pc]).ravel().astype(np.int64)

    # residual graph on sources and sinks only (the marginal arcs are saturated)
    up = pflow < pcap
    down = pflow > 0
    r_rows = np.concatenate([pr[up], n_r + pc[down]])
    r_cols = np.concatenate([n_r + pc[up], pr[down]])
    resid = sparse.csr_array((np.ones(r_rows.size), (r_rows, r_cols)), shape=(n_r + n_c, n_r + n_c))
    _, comp = connected_components(resid, directed=True, connection="strong")
    free_pair = comp[pr] == comp[n_r + pc]

    pair_index = {(int(a), int(b)): k for k, (a, b) in enumerate(zip(pr, pc))}
    fixed = np.zeros(cap.size, dtype=np.int64)
    active = np.zeros(cap.size, dtype=bool)
    for c in np.flatnonzero(live):
        k = pair_index[(int(src[c]), int(snk[c]))]
        if free_pair[k]:
            active[c] = True
        elif pflow[k] == pcap[k]:
            fixed[c] = cap[c]
    row_t = supplies - np.bincount(src, weights=fixed, minlength=n_r).astype(np.int64)
    col_t = needs - np.bincount(snk, weights=fixed, minlength=n_c).astype(np.int64)
    return fixed, active, row_t, col_t


class _Side:
    """One side (sources or sinks) of the cell table in owner-sorted order."""

    def __init__(self, owner: np.ndarray, other: np.ndarray, cap: np.ndarray, kernel: np.ndarray, target: np.ndarray):
        order = np.argsort(owner, kind="stable")
        self.owner_ids, counts = np.unique(owner[order], return_counts=True)
        self.indptr = np.concatenate(([0], np.cumsum(counts)))
        self.other = other[order]
        self.cap = cap[order]
        self.kernel = kernel[order]
        self.target = target[self.owner_ids]
        self.local_other = None

    def solve(self, other_dual: np.ndarray, init: np.ndarray, root_tol: float) -> Tuple[np.ndarray, bool]:
        base = self.kernel + other_dual[self.other]
        indptr, cap, target = self.indptr, self.cap, self.target

        def residual(a: np.ndarray, owners: np.ndarray) -> np.ndarray:
            owners = owners.astype(np.int64)
            starts, stops = indptr[owners], indptr[owners + 1]
            lengths = stops - starts
            offsets = np.concatenate(([0], np.cumsum(lengths)[:-1]))
            idx = np.arange(lengths.sum()) - np.repeat(offsets - starts, lengths)
            vals = cap[idx] * expit(np.repeat(a, lengths) + base[idx])
            return target[owners] - np.add.reduceat(vals, offsets)

        n = target.size
        owners = np.arange(n, dtype=np.float64)
        a0 = init.copy()
        f0 = residual(a0, owners)
        lo, hi = a0.copy(), a0.copy()
        up = f0 > 0
        down = f0 < 0
        step = 1.0
        pending_up, pending_down = up.copy(), down.copy()
        ok = True
        for _ in range(MAX_DOUBLINGS + 1):
            if not (pending_up.any() or pending_down.any()):
                break
            if pending_up.any():
                k = np.flatnonzero(pending_up)
                trial = a0[k] + step
                fk = residual(trial, owners[k])
                hi[k] = trial
                done = fk <= 0
                lo[k[~done]] = trial[~done]
                pending_up[k[done]] = False
            if pending_down.any():
                k = np.flatnonzero(pending_down)
                trial = a0[k] - step
                fk = residual(trial, owners[k])
                lo[k] = trial
                done = fk >= 0
                hi[k[~done]] = trial[~done]
                pending_down[k[done]] = False
            step *= 2.0
        if pending_up.any() or pending_down.any():
            ok = False
        solve = (up | down) & ~(pending_up | pending_down)
        out = a0.copy()
        out[pending_up] = hi[pending_up]
        out[pending_down] = lo[pending_down]
        if solve.any():
            k = np.flatnonzero(solve)
            res = elementwise.find_root(
                residual,
                (lo[k], hi[k]),
                args=(owners[k],),
                tolerances={"xatol": root_tol, "xrtol": 4 * np.finfo(float).eps, "fatol": root_tol * 1e-2, "frtol": 0.0},
            )
            out[k] = res.x
        return out, ok

    def marginals(self, own_dual: np.ndarray, other_dual: np.ndarray) -> np.ndarray:
        counts = np.diff(self.indptr)
        vals = self.cap * expit(np.repeat(own_dual, counts) + self.kernel + other_dual[self.other])
        return np.add.reduceat(vals, self.indptr[:-1])


def drm_solve(
    cot: CotInstance,
    mu: float = 1.0,
    eps: float = 1e-6,
    max_iter: int = 10_000,
    root_tol: float = 1e-12,
    init: Optional[DrmState] = None,
) -> Tuple[np.ndarray, DrmState]:
    """Regularized transport plan (in whpacks, one entry per cell) and the final dual state.

    ``eps`` bounds the largest marginal violation on the mass-normalized
    scale. If ``max_iter`` sweeps do not reach it the last iterate is
    returned with ``converged=False``.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    n_src, n_snk = len(cot.supplies), len(cot.needs)
    scaled, K = normalize(cot)
    log_kernel = scaled.profit / mu
    log_phi = np.zeros(n_src) if init is None else np.array(init.log_phi, dtype=float)
    log_psi = np.zeros(n_snk) if init is None else np.array(init.log_psi, dtype=float)
    if K == 0:
        return np.zeros(cot.n_cells), DrmState(log_phi, log_psi, log_kernel, mu, 0.0, 0, True)

    fixed, active, row_t, col_t = _presolve(cot.supplies, cot.needs, scaled.src, scaled.snk, cot.cap)
    d = fixed.astype(np.float64)
    if not active.any():
        return d, DrmState(log_phi, log_psi, log_kernel, mu, 0.0, 0, True)

    cells = np.flatnonzero(active)
    src, snk = scaled.src[cells], scaled.snk[cells]
    cap = scaled.cap[cells]
    kern = log_kernel[cells]
    rows = _Side(src, snk, cap, kern, row_t / K)
    cols = _Side(snk, src, cap, kern, col_t / K)
    # potentials of inactive rows/columns never enter an active cell
    a = np.nan_to_num(log_phi[rows.owner_ids], nan=0.0, posinf=0.0, neginf=0.0)
    c_full = np.nan_to_num(log_psi, nan=0.0, posinf=0.0, neginf=0.0)
    c = c_full[cols.owner_ids]
    # sides index the opposite duals by global id; map them to local positions
    row_pos = np.full(n_src, -1, dtype=np.int64)
    row_pos[rows.owner_ids] = np.arange(rows.owner_ids.size)
    col_pos = np.full(n_snk, -1, dtype=np.int64)
    col_pos[cols.owner_ids] = np.arange(cols.owner_ids.size)
    rows.other = col_pos[rows.other]
    cols.other = row_pos[cols.other]

    residual = np.inf
    converged = False
    iterations = 0
    bracketed = True
    for iterations in range(1, max_iter + 1):
        a, ok_r = rows.solve(c, a, root_tol)
        c, ok_c = cols.solve(a, c, root_tol)
        bracketed = ok_r and ok_c
        residual = max(
            float(np.max(np.abs(rows.marginals(a, c) - rows.target))),
            float(np.max(np.abs(cols.marginals(c, a) - cols.target))),
        )
        if residual <= eps:
            converged = bracketed
            break
    if not converged:
        log.warning("DRM stopped after %d sweeps with residual %.3g", iterations, residual)

    d[cells] += K * cap * expit(a[row_pos[src]] + kern + c[col_pos[snk]])
    np.clip(d, 0.0, np.asarray(cot.cap, dtype=np.float64), out=d)
    full_phi = np.array(log_phi, dtype=float)
    full_phi[rows.owner_ids] = a
    full_psi = np.array(log_psi, dtype=float)
    full_psi[cols.owner_ids] = c
    return d, DrmState(full_phi, full_psi, log_kernel, mu, residual, iterations, converged)


def drm_value(cot: CotInstance, d: np.ndarray) -> float:
    """Profit of ``d`` over real cells and breach-into-store cells."""
    counted = cot.counted_cells()
    profit = np.asarray([float(cot.profit[c]) for c in counted])
    return float(np.dot(profit, d[counted]))


@dataclass(frozen=True)
class DrmValue:
    value: float
    converged: bool
    residual: float
    iterations: int


class DrmOracle:
    """``g(x)`` approximated by :func:`drm_solve`; only meant for ranking candidates.

    A solve warm-starts from the dual state of a cached parent assignment
    (``parent`` if given, else the first cached vector with one trailer fewer
    at some store). Passing the parent explicitly keeps results independent of
    the order candidates are evaluated in.
    """

    def __init__(
        self,
        inst: Instance,
        variant: Variant = "final",
        mu: float = 1.0,
        eps: float = 1e-6,
        max_iter: int = 10_000,
        root_tol: float = 1e-12,
    ):
        self.inst = trim_shelf_capacity(inst)
        self.variant = variant
        self.template = CotTemplate.build(self.inst, variant)
        self.mu, self.eps, self.max_iter, self.root_tol = mu, eps, max_iter, root_tol
        self.calls = 0
        self.failures = 0
        self._cache: Dict[tuple, DrmValue] = {}
        self._states: Dict[tuple, DrmState] = {}
        arr = self.template.arrays()
        self._counted = np.flatnonzero(
            (np.asarray(self.template.sink_kinds)[arr["snk"]] == STORE)
            & np.isin(np.asarray(self.template.source_kinds)[arr["src"]], [ITEM, BREACH])
        )

    def _parent_state(self, x: TrailerAssignment, parent: Optional[TrailerAssignment]) -> Optional[DrmState]:
        if parent is not None:
            return self._states.get(parent.key())
        for j, _ in x.items():
            st = self._states.get(x.increment(j, -1).key())
            if st is not None:
                return st
        return None

    def evaluate(self, x: TrailerAssignment, parent: Optional[TrailerAssignment] = None) -> DrmValue:
        key = x.key()
        if key in self._cache:
            return self._cache[key]
        if x.total() == 0:
            out = DrmValue(0.0, True, 0.0, 0)
        else:
            self.calls += 1
            cot = self.template.instantiate(x)
            try:
                d, state = drm_solve(cot, self.mu, self.eps, self.max_iter, self.root_tol, self._parent_state(x, parent))
            except InfeasibleTransportError:
                out = DrmValue(float("-inf"), True, 0.0, 0)
            else:
                self._states[key] = state
                profit = self.template.arrays()["profit"]
                value = float(np.dot(profit[self._counted], d[self._counted]))
                out = DrmValue(value, state.converged, state.residual, state.iterations)
                if not state.converged:
                    self.failures += 1
        self._cache[key] = out
        return out

    def __call__(self, x: TrailerAssignment, parent: Optional[TrailerAssignment] = None) -> float:
        return self.evaluate(x, parent).value

    def evaluations(self) -> Dict[tuple, DrmValue]:
        """Every cached result so far, keyed by the trailer vector's key."""
        return dict(self._cache)


def value_oracle_drm(
    inst: Instance, x: TrailerAssignment, variant: Variant = "final", mu: float = 1.0, eps: float = 1e-6,
    max_iter: int = 10_000,
) -> DrmValue:
    """Approximate allocation value for ``x``; use for comparing candidates, not as a plan."""
    return DrmOracle(inst, variant, mu, eps, max_iter).evaluate(x)
