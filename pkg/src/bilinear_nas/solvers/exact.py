"""Provably optimal integer search by stage-wise branch and bound.

The objective and the latency are both sums of per-stage terms, so each
stage is reduced to its Pareto front of (accuracy gain, latency) options
first, and a depth-first search over stages prunes with an optimistic
completion (best remaining gain) and a pessimistic one (cheapest remaining
latency).
"""

from __future__ import annotations

import itertools
import time

import numpy as np

from ..errors import CapExceededError, InfeasibleError
from ..estimator import BilinearEstimator, eval_acc_batch, eval_lat_batch
from ..oracle import LatencyModel
from ..search_space import ArchPoint, enumerate_choices
from .result import FEAS_TOL, SearchResult


def _better(a, b) -> bool:
    """Order on (gain, latency, key): higher gain, then lower latency, then smaller key."""
    if a[0] != b[0]:
        return a[0] > b[0]
    if a[1] != b[1]:
        return a[1] < b[1]
    return a[2] < b[2]


def _pareto(options: list) -> list:
    """Drop options beaten by another on both gain and latency (ties by key)."""
    options = sorted(options, key=lambda o: (o[1], -o[0], o[2]))
    kept = []
    best_gain = -np.inf
    for o in options:
        if o[0] > best_gain:
            kept.append(o)
            best_gain = o[0]
    return kept


def stage_front(est: BilinearEstimator, lat: LatencyModel, s: int) -> list:
    """Pareto front of stage ``s`` as ``(gain, latency, (j, configs))`` tuples."""
    spec = est.spec
    options = []
    for j, d in enumerate(spec.depth_choices[s]):
        per_block = [
            _pareto([(est.config_deltas[s, b, c], lat.block_latency[s, b, c], c) for c in range(spec.num_configs)])
            for b in range(d)
        ]
        for combo in itertools.product(*per_block):
            gain = est.depth_deltas[s, j] + sum(o[0] for o in combo)
            cost = sum(o[1] for o in combo)
            cfg = tuple(o[2] for o in combo) + (0,) * (spec.max_depth - d)
            options.append((gain, cost, (j, cfg)))
    return _pareto(options)


def exact_search(
    est: BilinearEstimator,
    lat: LatencyModel,
    target: float,
    cap: int | None = 10**6,
) -> SearchResult:
    t0 = time.perf_counter()
    spec = est.spec
    count = spec.count_architectures()
    if cap is not None and count > cap:
        raise CapExceededError(f"search space has {count} architectures, cap is {cap}", count)
    budget = target - lat.fixed_overhead + FEAS_TOL * max(1.0, abs(target))
    fronts = [sorted(stage_front(est, lat, s), key=lambda o: -o[0]) for s in range(spec.num_stages)]
    n = len(fronts)
    best_rest = np.zeros(n + 1)
    cheap_rest = np.zeros(n + 1)
    for s in range(n - 1, -1, -1):
        best_rest[s] = best_rest[s + 1] + max(o[0] for o in fronts[s])
        cheap_rest[s] = cheap_rest[s + 1] + min(o[1] for o in fronts[s])
    if cheap_rest[0] > budget:
        raise InfeasibleError(
            f"cheapest architecture takes {cheap_rest[0] + lat.fixed_overhead:.6g} ms > {target:.6g} ms",
            cheap_rest[0] + lat.fixed_overhead,
        )

    incumbent = None
    nodes = 0
    chosen: list = [None] * n

    def dfs(s, gain, cost):
        nonlocal incumbent, nodes
        nodes += 1
        if s == n:
            cand = (gain, cost, tuple(o[2] for o in chosen))
            if incumbent is None or _better(cand, incumbent):
                incumbent = cand
            return
        for o in fronts[s]:
            if incumbent is not None and gain + o[0] + best_rest[s + 1] < incumbent[0]:
                break  # options are sorted by gain, the rest cannot do better
            if cost + o[1] + cheap_rest[s + 1] > budget:
                continue
            chosen[s] = o
            dfs(s + 1, gain + o[0], cost + o[1])

    dfs(0, 0.0, 0.0)
    key = incumbent[2]
    arch = ArchPoint.from_choices(spec, [k[0] for k in key], [k[1] for k in key])
    result = SearchResult.from_arch(est, lat, arch, "exact", target, trace=[(nodes, incumbent[0] + est.base, incumbent[1] + lat.fixed_overhead)])
    result.wall_time = time.perf_counter() - t0
    return result


def exhaustive_search(est: BilinearEstimator, lat: LatencyModel, target: float, cap: int | None = 10**6) -> SearchResult:
    """Plain scan over every effective architecture, same tie rules as :func:`exact_search`."""
    spec = est.spec
    depth_idx, config_idx = enumerate_choices(spec, cap)
    acc = eval_acc_batch(est, depth_idx, config_idx)
    latency = eval_lat_batch(lat, depth_idx, config_idx)
    feasible = np.flatnonzero(latency <= target + FEAS_TOL * max(1.0, abs(target)))
    if feasible.size == 0:
        raise InfeasibleError(f"no architecture fits {target:.6g} ms", float(latency.min()))
    # enumeration order is lexicographic, so the first tied index wins
    top = feasible[acc[feasible] == acc[feasible].max()]
    best_i = top[latency[top] == latency[top].min()][0]
    arch = ArchPoint.from_choices(spec, depth_idx[best_i], config_idx[best_i])
    return SearchResult.from_arch(est, lat, arch, "exhaustive", target)
