"""JSON encodings of instances and plans; metrics as CSV rows.

Rationals are written as strings (``"1/2"``) and read back exactly; plain
numbers are also accepted on input.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Mapping, Tuple

from .model import AllocationPlan, Instance, PlanMetrics, TrailerAssignment


def frac(v: Any) -> Fraction:
    if isinstance(v, float):
        return Fraction(str(v))
    return Fraction(v)


def qty_out(v: Fraction | int) -> int | str:
    v = Fraction(v)
    return v.numerator if v.denominator == 1 else str(v)


def instance_to_dict(inst: Instance) -> Dict[str, Any]:
    return {
        "items": list(inst.items),
        "stores": list(inst.stores),
        "categories": [{"id": l, "items": list(m)} for l, m in inst.categories.items()],
        "labour_capacity": dict(inst.labour_capacity),
        "inventory": dict(inst.inventory),
        "trailer_max": inst.trailer_max,
        "trailer_min": inst.trailer_min,
        "max_trailers": dict(inst.max_trailers),
        "shelf_capacity": [{"item": i, "store": j, "qty": c} for (i, j), c in sorted(inst.shelf_capacity.items())],
        "horizon": [{"item": i, "store": j, "days": h} for (i, j), h in sorted(inst.horizon.items())],
        "demand": [
            {"item": i, "store": j, "day": t, "qty": q}
            for (i, j, t), q in sorted(inst.demand.items())
            if q
        ],
        "store_priority": dict(inst.store_priority),
        "item_store_priority": [
            {"item": i, "store": j, "day": t, "value": qty_out(q)}
            for (i, j, t), q in sorted(inst.item_store_priority.items())
        ],
        "alpha": [qty_out(a) for a in inst.alpha],
        "beta": qty_out(inst.beta),
        "gamma": qty_out(inst.gamma),
    }


def instance_from_dict(doc: Mapping[str, Any]) -> Instance:
    cats = doc["categories"]
    if isinstance(cats, dict):
        categories = {l: tuple(m) for l, m in cats.items()}
    else:
        categories = {c["id"]: tuple(c["items"]) for c in cats}
    return Instance(
        items=tuple(doc["items"]),
        stores=tuple(doc["stores"]),
        categories=categories,
        labour_capacity={k: int(v) for k, v in doc["labour_capacity"].items()},
        inventory={k: int(v) for k, v in doc["inventory"].items()},
        trailer_max=int(doc["trailer_max"]),
        trailer_min=int(doc["trailer_min"]),
        max_trailers={k: int(v) for k, v in doc["max_trailers"].items()},
        shelf_capacity={(e["item"], e["store"]): int(e["qty"]) for e in doc.get("shelf_capacity", [])},
        horizon={(e["item"], e["store"]): int(e["days"]) for e in doc.get("horizon", [])},
        demand={(e["item"], e["store"], int(e["day"])): int(e["qty"]) for e in doc["demand"] if int(e["qty"])},
        store_priority={k: int(v) for k, v in doc["store_priority"].items()},
        item_store_priority={
            (e["item"], e["store"], int(e["day"])): frac(e["value"]) for e in doc.get("item_store_priority", [])
        },
        alpha=tuple(frac(a) for a in doc["alpha"]),
        beta=frac(doc["beta"]),
        gamma=frac(doc["gamma"]),
    )


def dumps_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=1, sort_keys=True) + "\n"


def loads_instance(text: str) -> Instance:
    return instance_from_dict(json.loads(text))


def instance_digest(inst: Instance) -> str:
    canon = json.dumps(instance_to_dict(inst), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def plan_to_dict(x: TrailerAssignment, plan: AllocationPlan) -> Dict[str, Any]:
    return {
        "allocations": [
            {"item": i, "store": j, "day": t, "qty": qty_out(v)} for (i, j, t), v in sorted(plan.d.items()) if v
        ],
        "trailers": [{"store": j, "count": c} for j, c in x.items()],
        "breach": [{"store": j, "qty": qty_out(v)} for j, v in sorted(plan.b.items()) if v],
        "objective": None if plan.objective_value is None else qty_out(plan.objective_value),
    }


def plan_from_dict(doc: Mapping[str, Any]) -> Tuple[TrailerAssignment, AllocationPlan]:
    x = TrailerAssignment({e["store"]: int(e["count"]) for e in doc.get("trailers", [])})
    d = {(e["item"], e["store"], int(e["day"])): frac(e["qty"]) for e in doc.get("allocations", [])}
    b = {e["store"]: frac(e["qty"]) for e in doc.get("breach", [])}
    obj = doc.get("objective")
    return x, AllocationPlan(d, b, None if obj is None else frac(obj))


def dumps_plan(x: TrailerAssignment, plan: AllocationPlan) -> str:
    return json.dumps(plan_to_dict(x, plan), indent=1, sort_keys=True) + "\n"


def metrics_row(m: PlanMetrics) -> Dict[str, Any]:
    return {
        "labour_utilization": round(m.overall_labour_utilization, 6),
        "trailer_utilization": round(m.trailer_utilization, 6),
        "total_allocation": qty_out(m.total_allocation),
        "trailer_count": m.trailer_count,
        "ltmc_breach_count": m.ltmc_breach_count,
        "total_breach": qty_out(m.total_breach),
        "integrality_fraction": round(m.integrality_fraction, 6),
        "mean_pf_dos": "" if m.mean_pf_dos is None else round(m.mean_pf_dos, 6),
    }


def rows_to_csv(rows: Iterable[Mapping[str, Any]], header: List[str] | None = None) -> str:
    rows = list(rows)
    if header is None:
        header = list(rows[0]) if rows else []
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()
