"""Evolutionary search over discrete architectures under a hard latency limit."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..errors import InfeasibleError
from ..estimator import BilinearEstimator, eval_acc_batch, eval_lat_batch
from ..oracle import LatencyModel
from ..search_space import ArchPoint, canonicalize, sample_choices
from .result import FEAS_TOL, SearchResult


@dataclass(frozen=True)
class EvolutionParams:
    population: int = 100
    mutation_prob: float = 0.1
    parent_ratio: float = 0.25
    mutation_ratio: float = 0.5
    generations: int = 500
    retry_factor: int = 10


def _feasible_mask(lat, target, depth_idx, config_idx):
    return eval_lat_batch(lat, depth_idx, config_idx) <= target + FEAS_TOL * max(1.0, abs(target))


def _initial_population(spec, lat, target, params, rng):
    budget = params.retry_factor * params.population
    kept_d, kept_c, drawn = [], [], 0
    while drawn < budget and sum(len(d) for d in kept_d) < params.population:
        n = min(params.population, budget - drawn)
        d, c = sample_choices(spec, rng, n)
        drawn += n
        ok = _feasible_mask(lat, target, d, c)
        kept_d.append(d[ok])
        kept_c.append(c[ok])
    d, c = np.concatenate(kept_d), np.concatenate(kept_c)
    if len(d) < params.population:
        raise InfeasibleError(
            f"only {len(d)} of {params.population} feasible architectures in {budget} uniform draws"
        )
    return d[: params.population], c[: params.population]


def _mutate(spec, d, c, prob, rng):
    d, c = d.copy(), c.copy()
    flip = rng.random(d.shape) < prob
    d[flip] = rng.integers(0, np.array(spec.beta_sizes), size=d.shape)[flip]
    flip = rng.random(c.shape) < prob
    c[flip] = rng.integers(0, spec.num_configs, size=c.shape)[flip]
    return d, c


def _crossover(d1, c1, d2, c2, rng):
    take = rng.random(d1.shape) < 0.5
    d = np.where(take, d1, d2)
    take = rng.random(c1.shape) < 0.5
    c = np.where(take, c1, c2)
    return d, c


def _children(spec, lat, target, params, rng, parent_d, parent_c, count, make):
    """Draw ``count`` feasible children with ``make``; parents fill any shortfall."""
    out_d, out_c, have, tries = [], [], 0, 0
    while have < count and tries < params.retry_factor:
        d, c = make(count - have)
        ok = _feasible_mask(lat, target, d, c)
        out_d.append(d[ok])
        out_c.append(c[ok])
        have += int(ok.sum())
        tries += 1
    if have < count:
        pick = rng.integers(0, len(parent_d), size=count - have)
        out_d.append(parent_d[pick])
        out_c.append(parent_c[pick])
    return np.concatenate(out_d)[:count], np.concatenate(out_c)[:count]


def evolutionary_search(
    est: BilinearEstimator,
    lat: LatencyModel,
    target: float,
    params: EvolutionParams = EvolutionParams(),
    rng: np.random.Generator | None = None,
    seed: int | None = None,
) -> SearchResult:
    """Keep the top ``parent_ratio`` each generation, refill by mutation and uniform crossover.

    Infeasible children are redrawn. Returns the best feasible architecture
    seen in any generation.
    """
    t0 = time.perf_counter()
    spec = est.spec
    if rng is None:
        rng = np.random.default_rng(seed)
    d, c = _initial_population(spec, lat, target, params, rng)
    n_parents = max(1, int(round(params.population * params.parent_ratio)))
    n_mutate = int(round(params.population * params.mutation_ratio))
    n_cross = params.population - n_parents - n_mutate

    best = None  # (acc, index into population arrays copied out)
    trace = []
    for gen in range(params.generations + 1):
        acc = eval_acc_batch(est, d, c)
        order = np.argsort(-acc, kind="stable")
        top = order[0]
        if best is None or acc[top] > best[0]:
            best = (acc[top], d[top].copy(), c[top].copy())
        best_lat = float(eval_lat_batch(lat, best[1][None], best[2][None])[0])
        trace.append((gen, float(best[0]), best_lat))
        if gen == params.generations:
            break
        pd, pc = d[order[:n_parents]], c[order[:n_parents]]

        def make_mutants(k):
            pick = rng.integers(0, n_parents, size=k)
            return _mutate(spec, pd[pick], pc[pick], params.mutation_prob, rng)

        def make_crosses(k):
            a = rng.integers(0, n_parents, size=k)
            b = rng.integers(0, n_parents, size=k)
            return _crossover(pd[a], pc[a], pd[b], pc[b], rng)

        md, mc = _children(spec, lat, target, params, rng, pd, pc, n_mutate, make_mutants)
        xd, xc = _children(spec, lat, target, params, rng, pd, pc, n_cross, make_crosses)
        d = np.concatenate([pd, md, xd])
        c = np.concatenate([pc, mc, xc])

    depth_idx = best[1]
    config_idx = canonicalize(spec, depth_idx, best[2])
    arch = ArchPoint.from_choices(spec, depth_idx, config_idx)
    result = SearchResult.from_arch(est, lat, arch, "evolution", target, trace=trace, seed=seed)
    result.wall_time = time.perf_counter() - t0
    return result
