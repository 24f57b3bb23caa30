"""Block-coordinate Frank-Wolfe for the bilinear latency-constrained program.

With a bilinear objective the exact line search always returns a unit step,
so every iteration replaces one block (alpha or beta) by the solution of a
relaxed multiple-choice knapsack LP built from the current partner block.
"""

from __future__ import annotations

import itertools
import time

import numpy as np

from ..errors import InfeasibleError, SparsityError
from ..estimator import BilinearEstimator, eval_acc, eval_lat, run_weights
from ..oracle import LatencyModel
from ..search_space import ArchPoint, SearchSpaceSpec
from .lp import LpSubproblem, lp_solve
from .result import SearchResult, is_feasible

FRACTION_TOL = 1e-9


def min_latency_start(spec: SearchSpaceSpec, lat: LatencyModel) -> ArchPoint:
    """Shallowest depth everywhere and the cheapest config of every block."""
    config_idx = np.argmin(lat.block_latency, axis=2)
    return ArchPoint.from_choices(spec, np.zeros(spec.num_stages, dtype=int), config_idx)


def alpha_subproblem(est: BilinearEstimator, lat: LatencyModel, beta, budget: float):
    """LP over the alpha groups that run with nonzero probability under ``beta``.

    Returns the problem and the ``(s, b)`` group list it covers.
    """
    w = run_weights(est.spec, beta)
    groups = [(s, b) for s in range(est.spec.num_stages) for b in range(est.spec.max_depth) if w[s, b] > 0.0]
    gains = tuple(est.config_deltas[s, b] * w[s, b] for s, b in groups)
    costs = tuple(lat.block_latency[s, b] * w[s, b] for s, b in groups)
    return LpSubproblem(gains, costs, budget), groups


def beta_subproblem(est: BilinearEstimator, lat: LatencyModel, alpha: np.ndarray, budget: float) -> LpSubproblem:
    spec = est.spec
    active = spec.active_blocks()
    block_gain = np.sum(alpha * est.config_deltas, axis=2)  # (S, D)
    block_cost = np.sum(alpha * lat.block_latency, axis=2)
    gains, costs = [], []
    for s, n in enumerate(spec.beta_sizes):
        gains.append(est.depth_deltas[s, :n] + active[s, :n] @ block_gain[s])
        costs.append(active[s, :n] @ block_cost[s])
    return LpSubproblem(tuple(gains), tuple(costs), budget)


def update_alpha(est, lat, alpha, beta, budget) -> np.ndarray:
    problem, groups = alpha_subproblem(est, lat, beta, budget)
    new = np.zeros_like(alpha)
    # blocks that never run are free; give them the config they would want
    best = np.argmax(est.config_deltas, axis=2)
    s_idx, b_idx = np.indices(best.shape)
    new[s_idx, b_idx, best] = 1.0
    if groups:
        sol = lp_solve(problem)
        for (s, b), u in zip(groups, sol.assignment):
            new[s, b] = u
    return new


def update_beta(est, lat, alpha, budget) -> tuple[np.ndarray, ...]:
    return lp_solve(beta_subproblem(est, lat, alpha, budget)).assignment


def bcfw_search(
    est: BilinearEstimator,
    lat: LatencyModel,
    target: float,
    iterations: int = 2000,
    p_block: float = 0.5,
    rng: np.random.Generator | None = None,
    start: ArchPoint | None = None,
    seed: int | None = None,
) -> SearchResult:
    """Run the block-coordinate iterations and round the relaxed output.

    ``p_block`` is the probability of updating alpha at an iteration. The
    result carries the relaxed iterate in ``relaxed`` and a trace of the
    relaxed objective and latency after every iteration (entry 0 is the start).
    """
    t0 = time.perf_counter()
    spec = est.spec
    if rng is None:
        rng = np.random.default_rng(seed)
    point = start if start is not None else min_latency_start(spec, lat)
    start_lat = eval_lat(lat, point)
    if not is_feasible(start_lat, target):
        raise InfeasibleError(f"start point latency {start_lat:.6g} ms exceeds target {target:.6g} ms", start_lat)
    budget = target - lat.fixed_overhead
    alpha, beta = point.alpha.copy(), tuple(b.copy() for b in point.beta)
    trace = [(0, eval_acc(est, point), start_lat)]
    alpha_settled = beta_settled = False
    for k in range(iterations):
        if alpha_settled and beta_settled:
            # fixed point: further block updates reproduce the same iterate
            trace.extend((i + 1, trace[-1][1], trace[-1][2]) for i in range(k, iterations))
            break
        if rng.random() < p_block:
            new_alpha = update_alpha(est, lat, alpha, beta, budget)
            changed = not np.array_equal(new_alpha, alpha)
            alpha = new_alpha
            alpha_settled = True
            if changed:
                beta_settled = False
        else:
            new_beta = update_beta(est, lat, alpha, budget)
            changed = not all(np.array_equal(a, b) for a, b in zip(new_beta, beta))
            beta = new_beta
            beta_settled = True
            if changed:
                alpha_settled = False
        current = ArchPoint(alpha, beta, "continuous")
        trace.append((k + 1, eval_acc(est, current), eval_lat(lat, current)))

    relaxed = ArchPoint(alpha, beta, "continuous")
    arch, deviation, flagged = round_solution(relaxed, lat, target)
    result = SearchResult.from_arch(est, lat, arch, "bcfw", target, trace=trace, seed=seed, relaxed=relaxed)
    result.flagged = flagged
    result.wall_time = time.perf_counter() - t0
    return result


def fractional_groups(point: ArchPoint) -> tuple[list, list]:
    """``(alpha groups, beta groups)`` that are not one-hot, as ``(key, nonzero idx)``."""
    def nonzeros(v):
        return np.flatnonzero(v > FRACTION_TOL)

    alpha_frac = []
    for s, b in itertools.product(range(point.alpha.shape[0]), range(point.alpha.shape[1])):
        nz = nonzeros(point.alpha[s, b])
        if len(nz) != 1:
            alpha_frac.append(((s, b), nz))
    beta_frac = []
    for s, v in enumerate(point.beta):
        nz = nonzeros(v)
        if len(nz) != 1:
            beta_frac.append((s, nz))
    return alpha_frac, beta_frac


def check_sparsity(point: ArchPoint) -> None:
    alpha_frac, beta_frac = fractional_groups(point)
    for name, frac in (("alpha", alpha_frac), ("beta", beta_frac)):
        if len(frac) > 1:
            raise SparsityError(f"{name} has {len(frac)} fractional groups; at most one is possible")
        if frac and len(frac[0][1]) != 2:
            raise SparsityError(f"{name} group {frac[0][0]} has {len(frac[0][1])} nonzeros, expected 2")


def round_solution(point: ArchPoint, lat: LatencyModel, target: float) -> tuple[ArchPoint, float, bool]:
    """Resolve the (at most one per block) fractional groups.

    The argmax entry is tried first, then the alternatives; the first
    assignment within ``target`` wins. If none fits, the lowest-latency one is
    returned with ``flagged=True``. Returns ``(arch, (LAT - T) / T, flagged)``.
    """
    check_sparsity(point)
    alpha_frac, beta_frac = fractional_groups(point)
    depth_idx = np.array([int(np.argmax(b)) for b in point.beta])
    config_idx = np.argmax(point.alpha, axis=2)
    options = []
    for key, nz in alpha_frac:
        values = point.alpha[key][nz]
        options.append(("alpha", key, list(nz[np.argsort(-values, kind="stable")])))
    for key, nz in beta_frac:
        values = point.beta[key][nz]
        options.append(("beta", key, list(nz[np.argsort(-values, kind="stable")])))

    candidates = []
    for picks in sorted(itertools.product(*[range(len(o[2])) for o in options]), key=sum):
        d, c = depth_idx.copy(), config_idx.copy()
        for (kind, key, order), p in zip(options, picks):
            if kind == "alpha":
                c[key] = order[p]
            else:
                d[key] = order[p]
        arch = ArchPoint.from_choices(lat.spec, d, c)
        latency = eval_lat(lat, arch)
        if is_feasible(latency, target):
            return arch, (latency - target) / target, False
        candidates.append((latency, arch))
    latency, arch = min(candidates, key=lambda x: x[0])
    return arch, (latency - target) / target, True
