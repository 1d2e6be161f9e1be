from fractions import Fraction as F
from typing import Dict, Sequence

import pytest
from hypothesis import strategies as st

from allocplan.model import Instance


def single_pair(
    demand: Sequence[int] = (4, 4),
    gamma=1000,
    beta=100,
    inventory: int = 10,
    labour: int = 100,
    M: int = 8,
    m: int = 3,
    R: int = 2,
    shelf: int = 10,
) -> Instance:
    """One item, one store, alpha = (1, 1/2, 1/4, ...): the T1/T2 family."""
    return Instance(
        items=("i1",),
        stores=("j1",),
        categories={"c": ("i1",)},
        labour_capacity={"c": labour},
        inventory={"i1": inventory},
        trailer_max=M,
        trailer_min=m,
        max_trailers={"j1": R},
        demand={("i1", "j1", t): q for t, q in enumerate(demand) if q},
        store_priority={"j1": 1},
        alpha=tuple(F(1, 2**t) for t in range(max(2, len(demand)))),
        beta=F(beta),
        gamma=F(gamma),
        shelf_capacity={("i1", "j1"): shelf},
    )


@pytest.fixture
def t1() -> Instance:
    return single_pair()


@pytest.fixture
def t2() -> Instance:
    return single_pair((2, 0))


@st.composite
def tiny_instances(draw, max_items: int = 2, max_stores: int = 2, max_demand: int = 3, max_cells: int = 6):
    """Random instances small enough for brute-force enumeration."""
    n_i = draw(st.integers(1, max_items))
    n_j = draw(st.integers(1, max_stores))
    items = tuple(f"i{k}" for k in range(n_i))
    stores = tuple(f"j{k}" for k in range(n_j))
    two_cats = n_i > 1 and draw(st.booleans())
    cats = {"a": items[:1], "b": items[1:]} if two_cats else {"a": items}
    cells = [(i, j, t) for i in items for j in stores for t in (0, 1)]
    demand: Dict = {}
    for c in cells[:max_cells]:
        q = draw(st.integers(0, max_demand))
        if q:
            demand[c] = q
    M = draw(st.integers(1, 6))
    m = draw(st.integers(0, M))
    q_vals = {c: F(draw(st.integers(1, 4)), 4) for c in demand if draw(st.booleans())}
    return Instance(
        items=items,
        stores=stores,
        categories=cats,
        labour_capacity={l: draw(st.integers(0, 8)) for l in cats},
        inventory={i: draw(st.integers(0, 8)) for i in items},
        trailer_max=M,
        trailer_min=m,
        max_trailers={j: draw(st.integers(0, 2)) for j in stores},
        demand=demand,
        store_priority={j: draw(st.integers(1, 3)) for j in stores},
        alpha=(F(1), F(draw(st.integers(1, 3)), 4)),
        beta=F(draw(st.integers(1, 5))),
        gamma=F(draw(st.integers(0, 6))),
        shelf_capacity={(i, j): draw(st.integers(0, 6)) for i in items for j in stores if draw(st.booleans())},
        item_store_priority=q_vals,
    )
