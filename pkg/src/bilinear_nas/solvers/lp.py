"""Relaxed multiple-choice knapsack LP.

maximize  sum_g gains[g] . u[g]
s.t.      sum_g costs[g] . u[g] <= budget,  u[g] on the simplex for every g.

Solved exactly by the classic greedy on LP-dominance-filtered upper hulls:
every group starts at its cheapest hull point and hull segments are taken in
order of decreasing incremental efficiency until the budget runs out. The
result is a basic solution: all groups one-hot except at most one, which has
two nonzeros.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InfeasibleError

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class LpSubproblem:
    gains: tuple[np.ndarray, ...]
    costs: tuple[np.ndarray, ...]
    budget: float

    def __post_init__(self):
        gains = tuple(np.asarray(g, dtype=float) for g in self.gains)
        costs = tuple(np.asarray(c, dtype=float) for c in self.costs)
        if len(gains) != len(costs):
            raise ValueError("gains and costs need the same group structure")
        for g, c in zip(gains, costs):
            if g.ndim != 1 or g.shape != c.shape or g.size == 0:
                raise ValueError("every group must be a nonempty 1-d array with matching costs")
        if not np.isfinite(self.budget):
            raise ValueError("budget must be finite")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "costs", costs)


@dataclass(frozen=True)
class LpSolution:
    assignment: tuple[np.ndarray, ...]
    value: float
    cost: float


def upper_hull(gains: np.ndarray, costs: np.ndarray) -> list[int]:
    """Indices of the LP-undominated items, by increasing cost.

    Along the returned chain gains strictly increase and incremental
    efficiencies strictly decrease. Ties keep the lowest index.
    """
    order = sorted(range(len(gains)), key=lambda i: (costs[i], -gains[i], i))
    frontier: list[int] = []
    for i in order:
        if frontier and gains[i] <= gains[frontier[-1]]:
            continue  # dominated: no cheaper and no better
        if frontier and costs[i] == costs[frontier[-1]]:
            continue
        frontier.append(i)
    hull: list[int] = []
    for i in frontier:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b unless slope(a, b) > slope(b, i)
            lhs = (gains[b] - gains[a]) * (costs[i] - costs[b])
            rhs = (gains[i] - gains[b]) * (costs[b] - costs[a])
            if lhs <= rhs:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def lp_solve(problem: LpSubproblem) -> LpSolution:
    hulls = [upper_hull(g, c) for g, c in zip(problem.gains, problem.costs)]
    position = [0] * len(hulls)
    min_cost = sum(float(c[h[0]]) for c, h in zip(problem.costs, hulls))
    tol = FEAS_TOL * max(1.0, abs(problem.budget))
    if min_cost > problem.budget + tol:
        raise InfeasibleError(
            f"minimal achievable cost {min_cost:.6g} exceeds budget {problem.budget:.6g}", min_cost
        )
    remaining = max(0.0, problem.budget - min_cost)

    steps = []
    for g, (gains, costs, hull) in enumerate(zip(problem.gains, problem.costs, hulls)):
        for k in range(len(hull) - 1):
            dp = gains[hull[k + 1]] - gains[hull[k]]
            dt = costs[hull[k + 1]] - costs[hull[k]]
            steps.append((-dp / dt, g, k, dt))
    steps.sort()

    fraction = None
    for _, g, k, dt in steps:
        if dt <= remaining:
            position[g] = k + 1
            remaining -= dt
        else:
            if remaining > 0.0:
                fraction = (g, k, remaining / dt)
            break

    assignment = []
    for g, (gains, hull) in enumerate(zip(problem.gains, hulls)):
        u = np.zeros(len(gains))
        u[hull[position[g]]] = 1.0
        assignment.append(u)
    if fraction is not None:
        g, k, lam = fraction
        u = assignment[g]
        u[:] = 0.0
        u[hulls[g][k]] = 1.0 - lam
        u[hulls[g][k + 1]] = lam
    value = sum(float(gn @ u) for gn, u in zip(problem.gains, assignment))
    cost = sum(float(c @ u) for c, u in zip(problem.costs, assignment))
    return LpSolution(tuple(assignment), value, cost)
