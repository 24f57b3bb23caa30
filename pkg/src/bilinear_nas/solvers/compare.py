"""Run every solver over a grid of latency targets and seeds."""

from __future__ import annotations

import numpy as np

from ..estimator import BilinearEstimator
from ..oracle import LatencyModel
from .bcfw import bcfw_search
from .evolution import EvolutionParams, evolutionary_search
from .exact import exact_search

SOLVERS = ("bcfw", "evolution", "exact")


def _cell_rng(seed: int, t_index: int, solver: str) -> np.random.Generator:
    return np.random.default_rng([seed, t_index, SOLVERS.index(solver)])


def run_solver(name, est, lat, target, rng, *, seed=None, iterations=2000, evo_params=None, cap=10**6):
    if name == "bcfw":
        return bcfw_search(est, lat, target, iterations=iterations, rng=rng, seed=seed)
    if name == "evolution":
        return evolutionary_search(est, lat, target, evo_params or EvolutionParams(), rng=rng, seed=seed)
    if name == "exact":
        result = exact_search(est, lat, target, cap=cap)
        result.seed = seed
        return result
    raise ValueError(f"unknown solver {name!r}")


def best_of(results):
    """Highest predicted accuracy among results within their target (None if none)."""
    ok = [r for r in results if r is not None and r.feasible]
    if not ok:
        return None
    return max(ok, key=lambda r: (r.predicted_acc, -r.latency))


def compare_solvers(
    est: BilinearEstimator,
    lat: LatencyModel,
    targets,
    seeds,
    *,
    iterations: int = 2000,
    evo_params: EvolutionParams | None = None,
    cap: int | None = 10**6,
) -> dict:
    """Per-cell results, per-(solver, target) mean/std, and the best of the three per cell.

    A solver error is recorded in its cell instead of aborting the grid. The
    exact solver is deterministic, so it runs once per target.
    """
    cells = []
    best_rows = []
    for ti, target in enumerate(targets):
        exact_result, exact_error = None, None
        try:
            exact_result = run_solver("exact", est, lat, target, None, cap=cap)
        except (ValueError, RuntimeError) as exc:
            exact_error = f"{type(exc).__name__}: {exc}"
        for seed in seeds:
            found = []
            for name in SOLVERS:
                result, error = None, None
                if name == "exact":
                    result, error = exact_result, exact_error
                else:
                    try:
                        result = run_solver(
                            name, est, lat, target, _cell_rng(seed, ti, name),
                            seed=seed, iterations=iterations, evo_params=evo_params,
                        )
                    except (ValueError, RuntimeError) as exc:
                        error = f"{type(exc).__name__}: {exc}"
                found.append(result)
                cells.append({
                    "target_ms": target,
                    "seed": seed,
                    "solver": name,
                    "predicted_acc": None if result is None else result.predicted_acc,
                    "latency_ms": None if result is None else result.latency,
                    "deviation": None if result is None else result.deviation,
                    "error": error,
                    "result": result,
                })
            winner = best_of(found)
            best_rows.append({
                "target_ms": target,
                "seed": seed,
                "solver": None if winner is None else winner.solver,
                "predicted_acc": None if winner is None else winner.predicted_acc,
                "latency_ms": None if winner is None else winner.latency,
            })

    summary = []
    for target in targets:
        for name in SOLVERS:
            vals = [c for c in cells if c["target_ms"] == target and c["solver"] == name and c["error"] is None]
            accs = np.array([c["predicted_acc"] for c in vals])
            lats = np.array([c["latency_ms"] for c in vals])
            summary.append({
                "target_ms": target,
                "solver": name,
                "n": len(vals),
                "acc_mean": float(accs.mean()) if len(vals) else None,
                "acc_std": float(accs.std()) if len(vals) else None,
                "lat_mean": float(lats.mean()) if len(vals) else None,
                "lat_std": float(lats.std()) if len(vals) else None,
            })
    return {"cells": cells, "summary": summary, "best": best_rows}
