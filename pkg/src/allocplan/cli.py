"""Command-line entry point: ``allocplan <command> ...``.

Exit codes: 0 success, 1 invalid input or infeasible plan, 2 DRM did not
converge, 3 a search or enumeration budget ran out.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .bnb import solve_global
from .drm import DrmOracle
from .exact import BudgetExceeded, ExactOracle, InfeasibleAllocationError
from .generator import PRESETS, GenConfig, apply_experiment, generate, preset
from .greedy import PlannerConfig, audit_submodularity, full_solve, SamplingExhausted
from .model import (
    Instance,
    TrailerAssignment,
    check_feasibility,
    compute_metrics,
    evaluate_objective,
    validate_instance,
)
from .reduction import ReductionError, build_cot
from .serialize import (
    dumps_instance,
    dumps_plan,
    instance_digest,
    loads_instance,
    metrics_row,
    plan_from_dict,
    qty_out,
    rows_to_csv,
)

log = logging.getLogger("allocplan")

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED, EXIT_BUDGET = 0, 1, 2, 3

CONFIGS = ("A", "B", "C", "Da", "Db", "Dc", "Dd")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


def _write(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load_instance(path: str) -> Instance:
    try:
        inst = loads_instance(Path(path).read_text())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CliError(f"cannot read instance {path}: {exc}") from exc
    errs = validate_instance(inst)
    if errs:
        raise CliError("invalid instance:\n  " + "\n  ".join(errs))
    return inst


def _planner_config(args, oracle: str, variant: str = "final") -> PlannerConfig:
    try:
        return PlannerConfig(
            rho=args.rho,
            oracle=oracle,
            variant=variant,
            seed=args.seed,
            lazy=args.lazy,
            mu=args.mu,
            drm_eps=args.drm_eps,
            drm_max_iter=args.drm_max_iter,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _self_check(inst: Instance, x: TrailerAssignment, plan) -> None:
    violations = check_feasibility(inst, x, plan)
    if violations:
        raise CliError("plan failed verification: " + "; ".join(map(str, violations)))


# --- commands -----------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.config:
        cfg = GenConfig.from_json(Path(args.config).read_text())
        if args.seed is not None:
            cfg = GenConfig(**{**cfg.__dict__, "seed": args.seed})
    else:
        cfg = preset(args.preset, args.seed or 0)
    _write(dumps_instance(generate(cfg)), args.output)
    return EXIT_OK


def _solve(inst: Instance, args):
    """Run the selected solver; returns ``(x, plan, stats)``."""
    stats: Dict[str, object] = {}
    if args.solver == "bnb":
        res = solve_global(inst, budget=args.node_budget)
        stats["nodes"] = res.nodes
        if not res.optimal:
            stats["budget_exceeded"] = True
        return res.x, res.plan, stats
    oracle = "drm" if args.solver == "greedy-drm" else args.oracle
    cfg = _planner_config(args, oracle, args.variant)
    x, plan, _ = full_solve(inst, cfg, stats=stats)
    return x, plan, stats


def cmd_solve(args) -> int:
    inst = _load_instance(args.instance)
    if args.dump_cot:
        x0 = TrailerAssignment({j: min(1, inst.max_trailers[j]) for j in inst.stores})
        Path(args.dump_cot).write_text(json.dumps(build_cot(inst, x0, args.variant).to_dict(), indent=1) + "\n")
    x, plan, stats = _solve(inst, args)
    _self_check(inst, x, plan)
    _write(dumps_plan(x, plan), args.output)
    m = compute_metrics(inst, x, plan)
    summary = {"objective": qty_out(plan.objective_value), **metrics_row(m), **stats}
    print(json.dumps(summary, sort_keys=True, default=str), file=sys.stderr)
    if stats.get("drm_failures"):
        raise CliError(f"DRM did not converge on {stats['drm_failures']} oracle calls", EXIT_NONCONVERGED)
    if stats.get("budget_exceeded"):
        raise CliError("node budget exhausted; plan is the best found, not proven optimal", EXIT_BUDGET)
    return EXIT_OK


def cmd_check(args) -> int:
    inst = _load_instance(args.instance)
    try:
        x, plan = plan_from_dict(json.loads(Path(args.plan).read_text()))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CliError(f"cannot read plan {args.plan}: {exc}") from exc
    try:
        violations = check_feasibility(inst, x, plan)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    value = evaluate_objective(inst, x, plan)
    for v in violations:
        print(f"VIOLATION {v}")
    if plan.objective_value is not None and plan.objective_value != value:
        print(f"MISMATCH stated objective {plan.objective_value} != recomputed {value}")
        return EXIT_INVALID
    print(f"objective {value}")
    print("feasible" if not violations else f"infeasible ({len(violations)} violations)")
    return EXIT_OK if not violations else EXIT_INVALID


def _run_config(inst: Instance, name: str, args):
    if name in ("A", "B", "C"):
        return apply_experiment(inst, name), _planner_config(args, "exact"), "greedy-exact"
    if name == "Da":
        return inst, None, "bnb"
    if name == "Db":
        return inst, _planner_config(args, "exact", "final"), "greedy-exact/final"
    if name == "Dc":
        return inst, _planner_config(args, "exact", "probe"), "greedy-exact/probe"
    if name == "Dd":
        return inst, _planner_config(args, "drm", "final"), "greedy-drm"
    raise CliError(f"unknown config {name!r}; choose from {', '.join(CONFIGS)}")


def cmd_compare(args) -> int:
    inst = _load_instance(args.instance)
    names = [c.strip() for c in args.configs.split(",") if c.strip()]
    unknown = [c for c in names if c not in CONFIGS]
    if unknown:
        raise CliError(f"unknown configs {unknown}; choose from {', '.join(CONFIGS)}")
    names = sorted(set(names), key=CONFIGS.index)
    digest = instance_digest(inst)
    results = {}
    code = EXIT_OK
    for name in names:
        run_inst, cfg, solver = _run_config(inst, name, args)
        start = time.perf_counter()
        stats: Dict[str, object] = {}
        if cfg is None:
            res = solve_global(run_inst, budget=args.node_budget)
            x, plan = res.x, res.plan
            stats["oracle_calls"] = res.nodes
            if not res.optimal:
                code = max(code, EXIT_BUDGET)
        else:
            x, plan, _ = full_solve(run_inst, cfg, stats=stats)
            if stats.get("drm_failures"):
                code = max(code, EXIT_NONCONVERGED)
        elapsed = time.perf_counter() - start
        _self_check(run_inst, x, plan)
        results[name] = (solver, x, plan, compute_metrics(run_inst, x, plan), elapsed, stats)

    ref_name = "Da" if "Da" in results else ("Db" if "Db" in results else None)
    ref = results[ref_name][3] if ref_name else None
    rows = []
    for name in names:
        solver, x, plan, m, elapsed, stats = results[name]
        row = {"config": name, "solver": solver, "seed": args.seed, "instance_digest": digest}
        row["objective"] = qty_out(plan.objective_value)
        row.update(metrics_row(m))
        row["normalized_allocation"] = (
            round(float(m.total_allocation / ref.total_allocation), 6) if ref and ref.total_allocation else ""
        )
        row["normalized_trailer_count"] = (
            round(m.trailer_count / ref.trailer_count, 6) if ref and ref.trailer_count else ""
        )
        row["oracle_calls"] = stats.get("oracle_calls", "")
        if not args.no_timing:
            row["wall_time_s"] = round(elapsed, 4)
        rows.append(row)
    _write(rows_to_csv(rows), args.output)
    if code == EXIT_NONCONVERGED:
        print("DRM did not converge on some oracle calls", file=sys.stderr)
    elif code == EXIT_BUDGET:
        print("global search hit its node budget", file=sys.stderr)
    return code


def cmd_audit(args) -> int:
    inst = _load_instance(args.instance)
    try:
        res = audit_submodularity(inst, args.triplets, seed=args.seed)
    except SamplingExhausted as exc:
        raise CliError(str(exc), EXIT_BUDGET) from exc
    rows = [
        {
            "X": json.dumps(X.as_dict(), sort_keys=True),
            "Y": json.dumps(Y.as_dict(), sort_keys=True),
            "k": k,
            "difference": qty_out(d),
            "normalised": round(nd, 6),
        }
        for (X, Y, k), d, nd in zip(res.triplets, res.differences, res.normalised())
    ]
    _write(rows_to_csv(rows, ["X", "Y", "k", "difference", "normalised"]), args.output)
    negatives = sum(1 for d in res.differences if d < 0)
    print(f"triplets {len(res.differences)} min {res.minimum} negative {negatives}", file=sys.stderr)
    return EXIT_OK


def _parse_sizes(text: str) -> List[tuple]:
    out = []
    for part in text.split(","):
        try:
            a, b = part.lower().split("x")
            out.append((int(a), int(b)))
        except ValueError:
            raise CliError(f"bad size {part!r}; expected ITEMSxSTORES") from None
    return out


def cmd_bench(args) -> int:
    rows = []
    base = preset("medium-bench", args.seed)
    for n_items, n_stores in _parse_sizes(args.sizes):
        cfg = GenConfig(**{**base.__dict__, "n_items": (n_items, n_items), "n_stores": (n_stores, n_stores)})
        inst = generate(cfg)
        rng = np.random.default_rng(args.seed)
        xs = [
            TrailerAssignment({j: int(rng.integers(0, inst.max_trailers[j] + 1)) for j in inst.stores})
            for _ in range(args.calls)
        ]
        exact, drm = ExactOracle(inst, "final"), DrmOracle(inst, "final", mu=args.mu, eps=args.drm_eps)
        t0 = time.perf_counter()
        for x in xs:
            exact(x)
        t_exact = (time.perf_counter() - t0) / len(xs)
        t0 = time.perf_counter()
        for x in xs:
            drm(x)
        t_drm = (time.perf_counter() - t0) / len(xs)
        rows.append(
            {
                "items": n_items,
                "stores": n_stores,
                "cells": len(inst.demand),
                "calls": len(xs),
                "exact_s_per_call": round(t_exact, 6),
                "drm_s_per_call": round(t_drm, 6),
                "drm_over_exact": round(t_drm / t_exact, 4) if t_exact else "",
                "drm_failures": drm.failures,
            }
        )
    _write(rows_to_csv(rows), args.output)
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rho", type=float, default=1.0, help="store sampling probability in (0, 1]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lazy", action="store_true", help="lazy (stale-bound heap) greedy")
    p.add_argument("--oracle", choices=("exact", "drm"), default="exact")
    p.add_argument("--variant", choices=("probe", "final"), default="final")
    p.add_argument("--mu", type=float, default=1.0, help="DRM regularization weight")
    p.add_argument("--drm-eps", type=float, default=1e-6)
    p.add_argument("--drm-max-iter", type=int, default=10_000)
    p.add_argument("--node-budget", type=int, default=1_000_000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="allocplan", description="Trailer and item allocation planning.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic instance")
    p.add_argument("--preset", choices=PRESETS, default="small-corpus")
    p.add_argument("--config", help="GenConfig JSON file (overrides --preset)")
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="plan trailers and allocations for an instance")
    p.add_argument("instance")
    p.add_argument("--solver", choices=("greedy-exact", "greedy-drm", "bnb"), default="greedy-exact")
    _add_solver_flags(p)
    p.add_argument("--dump-cot", metavar="FILE", help="write the transport problem for x = min(1, R) as JSON")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check", help="verify a plan against an instance")
    p.add_argument("instance")
    p.add_argument("plan")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("compare", help="run experiment configurations and emit a CSV report")
    p.add_argument("instance")
    p.add_argument("--configs", default="A,B,C,Db,Dc,Dd")
    _add_solver_flags(p)
    p.add_argument("--no-timing", action="store_true", help="omit the wall-time column")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("audit-submodularity", help="sample nested trailer vectors and compare gains")
    p.add_argument("instance")
    p.add_argument("--triplets", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("bench", help="time DRM against exact oracle calls")
    p.add_argument("--sizes", default="50x10,200x20,500x50")
    p.add_argument("--calls", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--drm-eps", type=float, default=1e-6)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InfeasibleAllocationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ReductionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
