"""Slow, independent reference implementations used as test oracles."""

from __future__ import annotations

import itertools
import math

import numpy as np

from bilinear_nas.estimator import eval_acc, eval_lat
from bilinear_nas.search_space import ArchPoint

TOL = 1e-9


# ---------------------------------------------------------------- LP oracle

def lp_vertex_optimum(gains, costs, budget):
    """Best value over all basic solutions of the relaxed MCKP.

    A vertex has every group one-hot except possibly one group mixing two
    entries so that the budget is tight. Returns ``-inf`` when infeasible.
    """
    groups = [np.asarray(g, float) for g in gains]
    cost = [np.asarray(c, float) for c in costs]
    best = -math.inf
    for picks in itertools.product(*[range(len(g)) for g in groups]):
        v = sum(g[i] for g, i in zip(groups, picks))
        w = sum(c[i] for c, i in zip(cost, picks))
        if w <= budget + TOL:
            best = max(best, v)
    for k, (g, c) in enumerate(zip(groups, cost)):
        others = [range(len(x)) for i, x in enumerate(groups) if i != k]
        for picks in itertools.product(*others):
            rest = [(x, y) for i, (x, y) in enumerate(zip(groups, cost)) if i != k]
            v0 = sum(x[i] for (x, _), i in zip(rest, picks))
            w0 = sum(y[i] for (_, y), i in zip(rest, picks))
            for a, b in itertools.combinations(range(len(g)), 2):
                if c[a] == c[b]:
                    continue
                lam = (budget - w0 - c[b]) / (c[a] - c[b])
                if 0.0 <= lam <= 1.0:
                    best = max(best, v0 + lam * g[a] + (1 - lam) * g[b])
    return best


# ------------------------------------------------ continuous optimum oracle

def _max_bilinear_box(f, g, target):
    """Max of a bilinear f(l, m) on [0,1]^2 subject to bilinear g(l, m) <= target.

    ``f`` and ``g`` are corner values ``[[v00, v01], [v10, v11]]`` indexed
    ``[l][m]``. A bilinear function has no strict interior maximum, so the
    optimum lies on a box edge or on the curve ``g = target``.
    """
    def coeffs(v):
        return v[0][0], v[1][0] - v[0][0], v[0][1] - v[0][0], v[1][1] - v[1][0] - v[0][1] + v[0][0]

    a0, a1, a2, a3 = coeffs(f)
    g0, g1, g2, g3 = coeffs(g)
    fv = lambda l, m: a0 + a1 * l + a2 * m + a3 * l * m
    gv = lambda l, m: g0 + g1 * l + g2 * m + g3 * l * m
    cands = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
    # crossings of g = target along the four edges
    for m in (0.0, 1.0):
        slope = g1 + g3 * m
        if slope != 0:
            cands.append(((target - g0 - g2 * m) / slope, m))
    for l in (0.0, 1.0):
        slope = g2 + g3 * l
        if slope != 0:
            cands.append((l, (target - g0 - g1 * l) / slope))
    # where the constraint stops depending on m, f is linear in m
    if g3 != 0:
        l0 = -g2 / g3
        cands += [(l0, 0.0), (l0, 1.0)]
    # stationary points of f along m(l) = (target - g0 - g1 l) / (g2 + g3 l)
    # f = a0 + a1 l + N(l)/D(l); f' = 0  <=>  a1 D^2 + N' D - N D' = 0
    n_poly = np.polymul([a3, a2], [-g1, target - g0])
    d_poly = np.array([g3, g2])
    eq = np.polyadd(np.polymul([a1], np.polymul(d_poly, d_poly)),
                    np.polysub(np.polymul(np.polyder(n_poly), d_poly), np.polymul(n_poly, np.polyder(d_poly))))
    eq = np.trim_zeros(np.atleast_1d(eq), "f")
    if eq.size > 1:
        for r in np.roots(eq):
            if abs(r.imag) < 1e-12:
                l = float(r.real)
                den = g2 + g3 * l
                if den != 0:
                    cands.append((l, (target - g0 - g1 * l) / den))
    best = -math.inf
    for l, m in cands:
        if -TOL <= l <= 1 + TOL and -TOL <= m <= 1 + TOL:
            l, m = min(max(l, 0.0), 1.0), min(max(m, 0.0), 1.0)
            if gv(l, m) <= target + 1e-9 * max(1.0, abs(target)):
                best = max(best, fv(l, m))
    return best


def continuous_optimum(est, lat, target):
    """Exact optimum of the relaxed program by enumerating sparse patterns.

    Some global optimum has at most one fractional alpha group and at most
    one fractional beta group, each with two nonzeros (replace either block
    by a basic solution of its LP at the fixed partner without losing value).
    Every such pattern is bilinear in the two mixing weights.
    """
    spec = est.spec
    S, D, C = spec.alpha_shape
    alpha_groups = [(s, b) for s in range(S) for b in range(D)]
    cache = {}

    def value(d, c):
        key = (d, c)
        if key not in cache:
            p = ArchPoint.from_choices(spec, np.array(d), np.array(c).reshape(S, D))
            cache[key] = (eval_acc(est, p), eval_lat(lat, p))
        return cache[key]

    best = -math.inf
    for d in itertools.product(*[range(n) for n in spec.beta_sizes]):
        for c in itertools.product(range(C), repeat=S * D):
            fv, gv = value(d, c)
            if gv <= target + 1e-9 * max(1.0, abs(target)):
                best = max(best, fv)
            for gi, (s, b) in enumerate(alpha_groups):
                for c2 in range(c[gi] + 1, C):
                    ca = c[:gi] + (c2,) + c[gi + 1:]
                    for st in range(S):
                        for j2 in range(d[st] + 1, spec.beta_sizes[st]):
                            db = d[:st] + (j2,) + d[st + 1:]
                            corners = [[value(d, c), value(db, c)], [value(d, ca), value(db, ca)]]
                            f = [[corners[i][k][0] for k in range(2)] for i in range(2)]
                            g = [[corners[i][k][1] for k in range(2)] for i in range(2)]
                            best = max(best, _max_bilinear_box(f, g, target))
    return best


# ------------------------------------------------------- rank metric oracles

def brute_kendall_tau_b(x, y):
    """Tau-b by explicit loops over all pairs."""
    n = len(x)
    s = n1 = n2 = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = (x[j] > x[i]) - (x[j] < x[i])
            dy = (y[j] > y[i]) - (y[j] < y[i])
            s += dx * dy
            n1 += dx == 0
            n2 += dy == 0
    n0 = n * (n - 1) // 2
    return s / math.sqrt((n0 - n1) * (n0 - n2))


def brute_midranks(x):
    """1-based ranks; tied values share the mean of their positions."""
    return np.array([1 + sum(v < xi for v in x) + (sum(v == xi for v in x) - 1) / 2 for xi in x], dtype=float)


def brute_spearman(x, y):
    rx, ry = brute_midranks(list(x)), brute_midranks(list(y))
    n = len(rx)
    dx = rx - math.fsum(rx) / n
    dy = ry - math.fsum(ry) / n
    return math.fsum(dx * dy) / math.sqrt(math.fsum(dx * dx) * math.fsum(dy * dy))


# ---------------------------------------------------- expectation oracle

def enumerated_expectation(oracle, depth_pins=None, config_pins=None):
    """E[true accuracy] under pinned-uniform sampling, by weighted enumeration.

    Enumerated architectures are canonical (non-running blocks fixed), so
    each carries the probability of its depth times 1/C per running block.
    """
    from bilinear_nas.search_space import enumerate_choices

    spec = oracle.spec
    depth_pins = depth_pins or {}
    config_pins = config_pins or {}
    d, c = enumerate_choices(spec)
    acc = oracle.true_accuracy_batch(d, c)
    depths = spec.depth_array()[np.arange(spec.num_stages), d]
    w = np.ones(len(d))
    for s in range(spec.num_stages):
        if s in depth_pins:
            w *= d[:, s] == depth_pins[s]
        else:
            w /= spec.beta_sizes[s]
        for b in range(spec.max_depth):
            runs = depths[:, s] > b
            if (s, b) in config_pins:
                # a pinned block that does not run still counts as drawn
                w *= np.where(runs, c[:, s, b] == config_pins[(s, b)], 1.0)
            else:
                w *= np.where(runs, 1.0 / spec.num_configs, 1.0)
    return float(np.sum(w * acc) / np.sum(w))


# --------------------------------------------------- regression oracle

def eigen_subspace_fit(x, y, k):
    """Least squares restricted to the top-k eigenvectors of the centered normal matrix."""
    xm = x.mean(axis=0)
    xc = x - xm
    yc = y - y.mean()
    g = xc.T @ xc
    vals, vecs = np.linalg.eigh(g)
    order = np.argsort(vals)[::-1][:k]
    v = vecs[:, order]
    w = v @ ((v.T @ (xc.T @ yc)) / vals[order])
    b = float(np.mean(y - x @ w))
    return b, w
