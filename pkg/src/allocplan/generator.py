"""Seeded synthetic instances and the experiment presets.

Every random quantity is drawn for the full horizon before any preset is
applied, so instances built from the same seed under different presets
share demand, inventory, labour and trailer data and differ only in what
the preset switches off (pull-forward days, breach penalty, priority mode).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from fractions import Fraction
from typing import Dict, Literal, Optional, Tuple

import numpy as np

from .model import Instance, validate_instance

QMode = Literal["proportional", "constant"]

PRESETS = ("expA", "expB", "expC", "expD", "small-corpus", "medium-bench")


@dataclass(frozen=True)
class GenConfig:
    # counts, drawn uniformly from the inclusive ranges
    n_items: Tuple[int, int] = (16, 16)
    n_stores: Tuple[int, int] = (6, 6)
    n_categories: Tuple[int, int] = (2, 2)
    horizon: Tuple[int, int] = (2, 3)
    # demand: truncated Poisson with item, store and weekday rate factors
    demand_rate: Tuple[float, float] = (0.5, 5.0)
    store_rate: Tuple[float, float] = (0.6, 1.4)
    weekday_factors: Tuple[float, ...] = (1.0, 0.8, 1.1, 1.5)
    demand_cap: int = 20
    demand_density: float = 1.0
    max_grid: Optional[int] = None
    # supply side
    inventory_slack: Tuple[float, float] = (0.7, 1.1)
    labour_tightness: Tuple[float, float] = (0.5, 0.7)
    trailer_max: int = 30
    trailer_min: int = 27
    max_trailers: Tuple[int, int] = (2, 5)
    shelf_slack: Tuple[float, float] = (0.8, 1.5)
    priority_levels: Tuple[int, ...] = (1, 2, 3)
    # objective weights
    alpha_ratio: str = "1/10"
    beta: str = "10"
    gamma: str = "100"
    pf_enabled: bool = True
    q_mode: QMode = "proportional"
    seed: int = 0

    def __post_init__(self):
        for name in ("n_items", "n_stores", "n_categories", "horizon", "max_trailers"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name}: invalid range {lo}..{hi}")
        if self.n_items[0] < 1 or self.n_stores[0] < 1 or self.n_categories[0] < 1:
            raise ValueError("need at least one item, store and category")
        r = Fraction(self.alpha_ratio)
        if not 0 < r < 1:
            raise ValueError("alpha_ratio must lie in (0, 1)")
        if not 0 <= self.trailer_min <= self.trailer_max or self.trailer_max < 1:
            raise ValueError("need 0 <= trailer_min <= trailer_max, trailer_max >= 1")
        if not 0 < self.demand_density <= 1:
            raise ValueError("demand_density must lie in (0, 1]")
        if self.q_mode not in ("proportional", "constant"):
            raise ValueError(f"unknown q_mode {self.q_mode!r}")
        if not self.weekday_factors:
            raise ValueError("weekday_factors must be non-empty")
        if Fraction(self.beta) < 0 or Fraction(self.gamma) < 0:
            raise ValueError("beta and gamma must be non-negative")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GenConfig":
        raw = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()})


def _draw_range(rng: np.random.Generator, lo_hi: Tuple[int, int]) -> int:
    return int(rng.integers(lo_hi[0], lo_hi[1] + 1))


def _shrink_grid(demand: Dict[tuple, int], max_grid: int) -> None:
    """Lower the largest demand cells until the enumeration grid prod(D+1) fits."""
    while True:
        grid = 1
        for q in demand.values():
            grid *= q + 1
        if grid <= max_grid:
            return
        cell = max(demand, key=lambda c: (demand[c], c))
        demand[cell] -= 1
        if not demand[cell]:
            del demand[cell]


def generate(cfg: GenConfig) -> Instance:
    rng = np.random.default_rng(cfg.seed)
    n_i = _draw_range(rng, cfg.n_items)
    n_j = _draw_range(rng, cfg.n_stores)
    n_l = min(_draw_range(rng, cfg.n_categories), n_i)
    items = tuple(f"i{k}" for k in range(n_i))
    stores = tuple(f"j{k}" for k in range(n_j))
    cats = tuple(f"l{k}" for k in range(n_l))
    # every category gets at least one item
    cat_idx = np.concatenate([np.arange(n_l), rng.integers(0, n_l, n_i - n_l)])
    rng.shuffle(cat_idx)

    h_max = cfg.horizon[1]
    T = h_max + 1
    horizons = rng.integers(cfg.horizon[0], cfg.horizon[1] + 1, size=(n_i, n_j))
    item_rate = rng.uniform(*cfg.demand_rate, size=n_i)
    store_rate = rng.uniform(*cfg.store_rate, size=n_j)
    week = np.array([cfg.weekday_factors[t % len(cfg.weekday_factors)] for t in range(T)])
    lam = item_rate[:, None, None] * store_rate[None, :, None] * week[None, None, :]
    raw = np.minimum(rng.poisson(lam), cfg.demand_cap)
    active = rng.random((n_i, n_j)) < cfg.demand_density
    inv_slack = rng.uniform(*cfg.inventory_slack, size=n_i)
    lab_tight = rng.uniform(*cfg.labour_tightness, size=n_l)
    R = rng.integers(cfg.max_trailers[0], cfg.max_trailers[1] + 1, size=n_j)
    shelf_slack = rng.uniform(*cfg.shelf_slack, size=(n_i, n_j))
    prio = rng.choice(np.asarray(cfg.priority_levels), size=n_j)

    # full-horizon demand within each pair's own horizon drives supply-side sizing
    in_h = np.arange(T)[None, None, :] <= horizons[:, :, None]
    full = np.where(in_h & active[:, :, None], raw, 0)
    pair_total = full.sum(axis=2)
    inventory = {items[a]: int(np.ceil(inv_slack[a] * pair_total[a].sum())) for a in range(n_i)}
    labour = {
        cats[l]: int(np.ceil(lab_tight[l] * pair_total[cat_idx == l].sum())) for l in range(n_l)
    }
    shelf = {
        (items[a], stores[b]): int(np.ceil(shelf_slack[a, b] * pair_total[a, b]))
        for a in range(n_i)
        for b in range(n_j)
        if pair_total[a, b] > 0
    }

    # presets act from here on
    h_eff = horizons if cfg.pf_enabled else np.zeros_like(horizons)
    demand = {
        (items[a], stores[b], t): int(full[a, b, t])
        for a in range(n_i)
        for b in range(n_j)
        for t in range(int(h_eff[a, b]) + 1)
        if full[a, b, t] > 0
    }
    if cfg.max_grid is not None:
        _shrink_grid(demand, cfg.max_grid)
    q: Dict[tuple, Fraction] = {}
    if cfg.q_mode == "proportional" and demand:
        top = int(full.max())
        idx_i = {i: a for a, i in enumerate(items)}
        idx_j = {j: b for b, j in enumerate(stores)}
        q = {(i, j, t): Fraction(int(full[idx_i[i], idx_j[j], t]), top) for (i, j, t) in demand}
    horizon = {(items[a], stores[b]): int(h_eff[a, b]) for a in range(n_i) for b in range(n_j)}
    max_day = int(h_eff.max()) if h_eff.size else 0
    r = Fraction(cfg.alpha_ratio)

    inst = Instance(
        items=items,
        stores=stores,
        categories={cats[l]: tuple(items[a] for a in range(n_i) if cat_idx[a] == l) for l in range(n_l)},
        labour_capacity=labour,
        inventory=inventory,
        trailer_max=cfg.trailer_max,
        trailer_min=cfg.trailer_min,
        max_trailers={stores[b]: int(R[b]) for b in range(n_j)},
        demand=demand,
        store_priority={stores[b]: int(prio[b]) for b in range(n_j)},
        alpha=tuple(r**t for t in range(max_day + 1)),
        beta=Fraction(cfg.beta),
        gamma=Fraction(cfg.gamma),
        shelf_capacity=shelf,
        horizon=horizon,
        item_store_priority=q,
    )
    errs = validate_instance(inst)
    if errs:
        raise ValueError(f"generator produced an invalid instance: {errs}")
    return inst


_MEDIUM = GenConfig()

_PRESETS: Dict[str, GenConfig] = {
    "expA": replace(_MEDIUM, pf_enabled=False, gamma="0"),
    "expB": replace(_MEDIUM, gamma="0"),
    "expC": replace(_MEDIUM, q_mode="constant"),
    "expD": _MEDIUM,
    "small-corpus": GenConfig(
        n_items=(1, 3),
        n_stores=(1, 3),
        n_categories=(1, 2),
        horizon=(0, 1),
        demand_rate=(0.5, 3.0),
        weekday_factors=(1.0, 1.3),
        demand_cap=6,
        demand_density=0.8,
        max_grid=20_000,
        inventory_slack=(0.5, 1.2),
        labour_tightness=(0.4, 1.0),
        trailer_max=5,
        trailer_min=2,
        max_trailers=(0, 2),
        shelf_slack=(0.6, 1.4),
        beta="1",
        gamma="5",
    ),
    "medium-bench": GenConfig(
        n_items=(500, 500),
        n_stores=(50, 50),
        n_categories=(5, 5),
        horizon=(3, 3),
        demand_density=0.3,
        demand_rate=(0.2, 3.0),
        trailer_max=40,
        trailer_min=28,
        max_trailers=(1, 3),
    ),
}


def preset(name: str, seed: int = 0) -> GenConfig:
    try:
        cfg = _PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    return replace(cfg, seed=seed)


def apply_experiment(inst: Instance, config: str) -> Instance:
    """Rewrite an instance for experiment ``A`` (no pull-forward, free breach), ``B`` (free breach) or ``C`` (q = 1)."""
    if config == "A":
        demand = {c: v for c, v in inst.demand.items() if c[2] == 0}
        q = {c: v for c, v in inst.item_store_priority.items() if c[2] == 0}
        horizon = {p: 0 for p in inst.horizon}
        return replace(inst, demand=demand, horizon=horizon, item_store_priority=q, alpha=inst.alpha[:1], gamma=Fraction(0))
    if config == "B":
        return replace(inst, gamma=Fraction(0))
    if config == "C":
        return replace(inst, item_store_priority={})
    if config == "D":
        return inst
    raise ValueError(f"unknown experiment {config!r}")
