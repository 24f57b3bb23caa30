import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from bilinear_nas.errors import CapExceededError, InfeasibleError, SparsityError
from bilinear_nas.estimator import eval_acc, eval_lat
from bilinear_nas.oracle import LatencyModel
from bilinear_nas.search_space import ArchPoint, SearchSpaceSpec, enumerate_choices
from bilinear_nas.solvers import (
    EvolutionParams,
    LpSubproblem,
    bcfw_search,
    check_sparsity,
    compare_solvers,
    evolutionary_search,
    exact_search,
    exhaustive_search,
    fractional_groups,
    lp_solve,
    min_latency_start,
    round_solution,
)
from conftest import latency_quantile, make_problem
from oracles import continuous_optimum, lp_vertex_optimum


# -- LP ------------------------------------------------------------------------------


def random_lp(rng, max_entries=12):
    n_groups = int(rng.integers(1, 5))
    sizes = rng.integers(1, 4, size=n_groups)
    while sizes.sum() > max_entries:
        sizes[np.argmax(sizes)] -= 1
    gains = tuple(np.round(rng.normal(size=n), 3) for n in sizes)
    costs = tuple(np.round(rng.uniform(0.5, 3.0, size=n), 3) for n in sizes)
    lo = sum(c.min() for c in costs)
    hi = sum(c.max() for c in costs)
    return LpSubproblem(gains, costs, float(rng.uniform(lo, hi + 0.5)))


def assert_basic(sol):
    frac = [u for u in sol.assignment if np.count_nonzero(u) != 1]
    assert len(frac) <= 1
    if frac:
        assert np.count_nonzero(frac[0]) == 2
    for u in sol.assignment:
        assert np.all(u >= 0) and u.sum() == pytest.approx(1.0, abs=1e-12)


def test_lp_matches_vertex_enumeration_and_highs():
    rng = np.random.default_rng(0)
    for _ in range(300):
        p = random_lp(rng)
        sol = lp_solve(p)
        assert_basic(sol)
        assert sol.cost <= p.budget + 1e-9
        assert sol.value == pytest.approx(lp_vertex_optimum(p.gains, p.costs, p.budget), abs=1e-9)
        # HiGHS as a second opinion
        c = -np.concatenate(p.gains)
        a_ub = np.concatenate(p.costs)[None]
        a_eq = np.zeros((len(p.gains), len(c)))
        off = 0
        for g, gains in enumerate(p.gains):
            a_eq[g, off : off + len(gains)] = 1
            off += len(gains)
        ref = linprog(c, A_ub=a_ub, b_ub=[p.budget], A_eq=a_eq, b_eq=np.ones(len(p.gains)), bounds=(0, None))
        assert sol.value == pytest.approx(-ref.fun, abs=1e-7)


def test_lp_slack_budget_gives_argmax():
    p = LpSubproblem((np.array([1.0, 3.0, 2.0]), np.array([0.5, -1.0])), (np.array([1.0, 2.0, 3.0]), np.array([1.0, 1.0])), 100.0)
    sol = lp_solve(p)
    assert np.argmax(sol.assignment[0]) == 1 and np.argmax(sol.assignment[1]) == 0
    assert sol.value == 3.5


def test_lp_two_by_two_binding():
    p = LpSubproblem((np.array([0.0, 2.0]), np.array([0.0, 1.0])), (np.array([1.0, 3.0]), np.array([1.0, 2.0])), 3.0)
    sol = lp_solve(p)
    assert sol.value == pytest.approx(lp_vertex_optimum(p.gains, p.costs, p.budget))
    # efficiency of group 0 is 1, of group 1 is 1: budget 1 buys half of group 0's step
    assert sol.cost == pytest.approx(3.0)


def test_lp_budget_at_minimum_cost():
    p = LpSubproblem((np.array([5.0, 1.0]), np.array([2.0, 0.0])), (np.array([2.0, 1.0]), np.array([4.0, 1.5])), 2.5)
    sol = lp_solve(p)
    assert np.argmax(sol.assignment[0]) == 1 and np.argmax(sol.assignment[1]) == 1
    assert all(np.count_nonzero(u) == 1 for u in sol.assignment)


def test_lp_infeasible_carries_min_cost():
    p = LpSubproblem((np.array([1.0, 2.0]),), (np.array([3.0, 4.0]),), 2.0)
    with pytest.raises(InfeasibleError) as exc:
        lp_solve(p)
    assert exc.value.min_cost == 3.0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9))
def test_lp_property_optimal_and_basic(seed):
    p = random_lp(np.random.default_rng(seed))
    sol = lp_solve(p)
    assert_basic(sol)
    assert sol.value == pytest.approx(lp_vertex_optimum(p.gains, p.costs, p.budget), abs=1e-9)


# -- BCFW ------------------------------------------------------------------------------


def test_bcfw_monotone_and_sparse(small_spec):
    oracle, lat, est = make_problem(small_spec, 1, epsilon=0.002)
    target = latency_quantile(small_spec, lat, 0.5)
    for seed in range(10):
        res = bcfw_search(est, lat, target, iterations=200, seed=seed)
        objs = [t[1] for t in res.trace]
        assert all(b >= a - 1e-9 for a, b in zip(objs, objs[1:]))
        assert all(t[2] <= target + 1e-7 for t in res.trace)
        check_sparsity(res.relaxed)
        assert len(res.trace) == 201


def test_bcfw_unconstrained_separable_reaches_argmax(small_spec):
    oracle, lat, est = make_problem(small_spec, 2)
    target = 1e6
    res = bcfw_search(est, lat, target, iterations=50, seed=0)
    best = exact_search(est, lat, target)
    assert res.predicted_acc == pytest.approx(best.predicted_acc, abs=1e-12)
    assert fractional_groups(res.relaxed) == ([], [])
    # effective (state-changing) updates: at most three after the start
    objs = [t[1] for t in res.trace]
    changes = sum(1 for a, b in zip(objs, objs[1:]) if b != a)
    assert changes <= 3


def test_bcfw_infeasible_start(tiny_spec):
    _, lat, est = make_problem(tiny_spec, 0)
    with pytest.raises(InfeasibleError):
        bcfw_search(est, lat, 1.0, iterations=5, seed=0)


def test_bcfw_default_start_is_min_latency(tiny_spec):
    _, lat, _ = make_problem(tiny_spec, 0)
    start = min_latency_start(tiny_spec, lat)
    d, c = enumerate_choices(tiny_spec)
    lats = [eval_lat(lat, ArchPoint.from_choices(tiny_spec, d[i], c[i])) for i in range(len(d))]
    assert eval_lat(lat, start) == pytest.approx(min(lats))


def test_bcfw_seeded(small_spec):
    _, lat, est = make_problem(small_spec, 3)
    a = bcfw_search(est, lat, 18.0, iterations=100, seed=4)
    b = bcfw_search(est, lat, 18.0, iterations=100, seed=4)
    assert a.trace == b.trace and a.predicted_acc == b.predicted_acc


def test_bcfw_never_above_continuous_optimum(tiny_spec):
    for seed in range(5):
        _, lat, est = make_problem(tiny_spec, 100 + seed)
        target = latency_quantile(tiny_spec, lat, 0.5)
        opt = continuous_optimum(est, lat, target)
        assert opt >= exhaustive_search(est, lat, target).predicted_acc - 1e-9
        res = bcfw_search(est, lat, target, iterations=40, seed=seed)
        assert max(t[1] for t in res.trace) <= opt + 1e-9


# -- rounding --------------------------------------------------------------------------


def _tiny_lat():
    spec = SearchSpaceSpec.uniform(1, (1,), 2)
    lat = LatencyModel(spec, np.array([[[1.0, 3.0]]]), 0.0)
    return spec, lat


def test_round_discrete_is_unchanged():
    spec, lat = _tiny_lat()
    p = ArchPoint.from_choices(spec, [0], [[1]])
    arch, dev, flagged = round_solution(p, lat, 4.0)
    assert np.array_equal(arch.alpha, p.alpha) and not flagged
    assert dev == pytest.approx((3.0 - 4.0) / 4.0)


def test_round_prefers_feasible_argmax():
    spec, lat = _tiny_lat()
    p = ArchPoint(np.array([[[0.7, 0.3]]]), (np.array([1.0]),), "continuous")
    arch, dev, flagged = round_solution(p, lat, 2.0)
    assert arch.choices()[1][0, 0] == 0 and not flagged


def test_round_falls_back_to_alternative():
    spec, lat = _tiny_lat()
    p = ArchPoint(np.array([[[0.3, 0.7]]]), (np.array([1.0]),), "continuous")
    arch, dev, flagged = round_solution(p, lat, 2.0)
    assert arch.choices()[1][0, 0] == 0 and not flagged and dev == pytest.approx(-0.5)


def test_round_flags_when_nothing_fits():
    spec, lat = _tiny_lat()
    p = ArchPoint(np.array([[[0.3, 0.7]]]), (np.array([1.0]),), "continuous")
    arch, dev, flagged = round_solution(p, lat, 0.5)
    assert flagged and arch.choices()[1][0, 0] == 0 and dev == pytest.approx(1.0)


def test_round_rejects_dense_point():
    spec = SearchSpaceSpec.uniform(1, (1,), 3)
    lat = LatencyModel(spec, np.ones((1, 1, 3)), 0.0)
    p = ArchPoint(np.full((1, 1, 3), 1 / 3), (np.array([1.0]),), "continuous")
    with pytest.raises(SparsityError):
        round_solution(p, lat, 10.0)


# -- exact and evolution ---------------------------------------------------------------


@pytest.mark.parametrize("spec", [SearchSpaceSpec.uniform(1, (1, 2), 2), SearchSpaceSpec.uniform(2, (1, 2), 2)])
def test_exact_matches_exhaustive(spec):
    for seed in range(10):
        _, lat, est = make_problem(spec, seed, epsilon=0.003)
        d, c = enumerate_choices(spec)
        lats = np.sort([eval_lat(lat, ArchPoint.from_choices(spec, d[i], c[i])) for i in range(len(d))])
        for target in (lats[0], lats[len(lats) // 2], lats[-1] + 1):
            a = exact_search(est, lat, float(target))
            b = exhaustive_search(est, lat, float(target))
            assert np.array_equal(a.arch.alpha, b.arch.alpha)
            assert all(np.array_equal(x, y) for x, y in zip(a.arch.beta, b.arch.beta))
            assert a.latency <= target + 1e-9


def test_exact_unconstrained_separable_is_per_decision_argmax(tiny_spec):
    _, lat, est = make_problem(tiny_spec, 0)
    res = exact_search(est, lat, 1e6)
    d, c = res.arch.choices()
    for s in range(tiny_spec.num_stages):
        assert d[s] == np.argmax(est.depth_deltas[s, : tiny_spec.beta_sizes[s]] + [
            sum(est.config_deltas[s, b].max() for b in range(depth)) for depth in tiny_spec.depth_choices[s]
        ])


def test_exact_errors(tiny_spec):
    _, lat, est = make_problem(tiny_spec, 0)
    with pytest.raises(InfeasibleError):
        exact_search(est, lat, 0.5)
    with pytest.raises(CapExceededError):
        exact_search(est, lat, 100.0, cap=10)


def test_evolution_single_architecture_space():
    spec = SearchSpaceSpec.uniform(1, (1,), 1)
    _, lat, est = make_problem(spec, 0)
    res = evolutionary_search(est, lat, 100.0, EvolutionParams(generations=5), seed=0)
    assert res.predicted_acc == pytest.approx(eval_acc(est, ArchPoint.from_choices(spec, [0], [[0]])))


def test_evolution_finds_tiny_optimum():
    spec = SearchSpaceSpec.uniform(1, (1, 2), 2)
    hits = 0
    for seed in range(20):
        _, lat, est = make_problem(spec, seed)
        target = latency_quantile(spec, lat, 0.5)
        res = evolutionary_search(est, lat, target, EvolutionParams(generations=50), seed=seed)
        assert res.latency <= target + 1e-9
        hits += res.predicted_acc >= exact_search(est, lat, target).predicted_acc - 1e-12
    assert hits >= 19


def test_evolution_infeasible(tiny_spec):
    _, lat, est = make_problem(tiny_spec, 0)
    with pytest.raises(InfeasibleError):
        evolutionary_search(est, lat, 0.5, EvolutionParams(generations=2), seed=0)


def test_compare_solvers_best_dominates():
    spec = SearchSpaceSpec.uniform(2, (1, 2), 2)
    _, lat, est = make_problem(spec, 5)
    d, c = enumerate_choices(spec)
    lats = np.sort([eval_lat(lat, ArchPoint.from_choices(spec, d[i], c[i])) for i in range(len(d))])
    targets = [float(lats[10]), float(lats[25]), 0.1]
    rep = compare_solvers(est, lat, targets, [0, 1], iterations=50, evo_params=EvolutionParams(generations=30))
    assert len(rep["cells"]) == 3 * 2 * 3
    assert all(cell["error"] for cell in rep["cells"] if cell["target_ms"] == 0.1)
    for row in rep["best"]:
        if row["target_ms"] == 0.1:
            assert row["solver"] is None
            continue
        mine = [c for c in rep["cells"] if c["target_ms"] == row["target_ms"] and c["seed"] == row["seed"]]
        feas = [c["predicted_acc"] for c in mine if c["result"].feasible]
        assert row["predicted_acc"] == max(feas)
        exact = [c for c in mine if c["solver"] == "exact"][0]
        assert row["predicted_acc"] == pytest.approx(exact["predicted_acc"])
    summary = {(r["target_ms"], r["solver"]): r for r in rep["summary"]}
    assert summary[(targets[0], "exact")]["acc_std"] == 0.0
