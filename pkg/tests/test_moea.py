import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import brute_force_fronts, mc_hypervolume, random_front
from rigaa.core import Individual, random_valid_scenario
from rigaa.errors import BudgetTooSmall, ParentTooShort
from rigaa.maze import MAZE_SCHEMA, MazeDomain
from rigaa.moea import (
    LOG_FIELDS,
    ConvergenceLog,
    MoeaConfig,
    assign_rank_density,
    change_mutation,
    crowding_distance,
    dominance_ranks,
    dominates,
    evolve,
    exchange_mutation,
    hv_contributions,
    hypervolume_2d,
    mutate,
    non_dominated_sort,
    one_point_crossover,
    random_search,
    survivor_select,
    tournament_select,
)
from rigaa.road import ROAD_SCHEMA, RoadDomain


def test_small_sort_example():
    objs = np.array([[1, 1], [2, 2], [0, 3]])
    fronts = non_dominated_sort(objs)
    assert [f.tolist() for f in fronts] == [[0, 2], [1]]


def test_identical_objectives_form_one_front():
    assert [f.tolist() for f in non_dominated_sort(np.ones((6, 2)))] == [list(range(6))]


@given(st.integers(0, 2**32 - 1), st.integers(1, 30), st.booleans(), st.integers(2, 3))
def test_sort_matches_brute_force(seed, n, integer, m):
    rng = np.random.default_rng(seed)
    objs = rng.integers(0, 5, size=(n, m)).astype(float) if integer else rng.random((n, m))
    fronts = [f.tolist() for f in non_dominated_sort(objs)]
    assert fronts == brute_force_fronts(objs)
    assert sorted(i for f in fronts for i in f) == list(range(n))


def test_ranks_of_empty_input():
    assert dominance_ranks(np.zeros((0, 2))).size == 0
    assert non_dominated_sort(np.zeros((0, 2))) == []


def test_crowding_examples():
    assert np.all(np.isinf(crowding_distance([[0, 1], [1, 0]])))
    cd = crowding_distance([[0, 0], [0.5, 0.5], [1, 1]])
    assert cd[1] == pytest.approx(2.0)
    flat = crowding_distance([[0, 5], [1, 5], [2, 5]])
    assert flat[1] == pytest.approx(1.0)


@given(st.integers(0, 2**32 - 1))
def test_crowding_matches_reference(seed):
    objs = np.random.default_rng(seed).random((5, 2))
    expected = np.zeros(5)
    for k in range(2):
        order = sorted(range(5), key=lambda i: (objs[i, k], i))
        expected[order[0]] = expected[order[-1]] = math.inf
        span = objs[order[-1], k] - objs[order[0], k]
        for pos in range(1, 4):
            expected[order[pos]] += (objs[order[pos + 1], k] - objs[order[pos - 1], k]) / span
    assert np.allclose(crowding_distance(objs), expected)


def test_hypervolume_rectangle_union():
    assert hypervolume_2d([[1, 2], [2, 1]], [3, 3]) == pytest.approx(3.0)
    assert hypervolume_2d([[4, 4]], [3, 3]) == 0.0


def test_contributions_match_leave_one_out():
    pts = np.array([[0, 4], [1, 1], [4, 0]], dtype=float)
    ref = np.array([5.0, 5.0])
    total = hypervolume_2d(pts, ref)
    loo = [total - hypervolume_2d(np.delete(pts, i, axis=0), ref) for i in range(3)]
    assert np.allclose(hv_contributions(pts, ref), loo)
    assert np.allclose(loo, [1, 9, 1])


@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_contributions_leave_one_out_random(seed, n):
    pts = random_front(np.random.default_rng(seed), n)
    ref = np.array([1.1, 1.1])
    total = hypervolume_2d(pts, ref)
    loo = [total - hypervolume_2d(np.delete(pts, i, axis=0), ref) for i in range(n)]
    assert np.allclose(hv_contributions(pts, ref), loo, atol=1e-12)


def test_hypervolume_against_monte_carlo():
    rng = np.random.default_rng(0)
    for _ in range(5):
        pts = random_front(rng, int(rng.integers(2, 15)))
        ref = np.array([1.2, 1.2])
        assert mc_hypervolume(pts, ref, 200_000, rng) == pytest.approx(hypervolume_2d(pts, ref), rel=0.02)


def make_pop(objs, ranks=None, dens=None):
    pop = [Individual(np.zeros((2, 3), dtype=np.int64), np.asarray(o, dtype=float)) for o in objs]
    for i, ind in enumerate(pop):
        ind.rank = 0 if ranks is None else ranks[i]
        ind.density = 0.0 if dens is None else dens[i]
    return pop


def test_tournament_rules():
    rng = np.random.default_rng(1)
    a, b = make_pop([[0, 0], [1, 1]], ranks=[0, 1])
    assert all(tournament_select([a, b], rng) is a for _ in range(100))
    a, b = make_pop([[0, 0], [1, 1]], dens=[2.0, 0.5])
    assert all(tournament_select([a, b], rng) is a for _ in range(100))
    a, b = make_pop([[0, 0], [1, 1]])
    wins = sum(tournament_select([a, b], rng) is a for _ in range(10_000))
    assert abs(wins / 10_000 - 0.5) <= 0.03


def test_crossover_example_and_no_aliasing():
    p1 = np.array([[0, 1, 1], [0, 2, 2], [0, 3, 3], [0, 4, 4]])  # A B C D
    p2 = np.array([[1, 5, 5], [1, 6, 6], [1, 7, 7], [1, 8, 8]])  # E F G H
    c1, c2 = one_point_crossover(p1, p2, np.random.default_rng(0), k=2)
    assert c1.tolist() == p1[:2].tolist() + p2[2:].tolist()
    assert c2.tolist() == p2[:2].tolist() + p1[2:].tolist()
    c1[0, 0] = 99
    assert p1[0, 0] == 0
    c1, c2 = one_point_crossover(p1, p2, np.random.default_rng(0), k=3)
    assert c1[:3].tolist() == p1[:3].tolist() and c1[3].tolist() == p2[3].tolist()
    with pytest.raises(ParentTooShort):
        one_point_crossover(p1[:1], p2, np.random.default_rng(0))


@given(st.integers(0, 2**32 - 1), st.integers(2, 30), st.integers(2, 30))
def test_crossover_point_and_lengths(seed, n1, n2):
    rng = np.random.default_rng(seed)
    p1 = np.arange(n1 * 3).reshape(n1, 3)
    p2 = -np.arange(n2 * 3).reshape(n2, 3) - 1
    c1, c2 = one_point_crossover(p1, p2, rng)
    k = int(np.sum(c1[:, 0] >= 0))
    assert 1 <= k <= min(n1, n2) - 1
    assert len(c1) == n2 and len(c2) == n1


def test_exchange_example():
    abcd = np.array([[0, 1, 1], [0, 2, 2], [0, 3, 3], [0, 4, 4]])
    out = exchange_mutation(abcd, np.random.default_rng(0), pair=(1, 3))
    assert out.tolist() == abcd[[0, 3, 2, 1]].tolist()
    assert abcd[1, 1] == 2


def test_change_of_variable_never_keeps_value():
    rng = np.random.default_rng(2)
    c = np.array([[0, 10, 5]] * 40)
    seen = set()
    for _ in range(2000):
        v = change_mutation(c, MAZE_SCHEMA, rng, where=(3, 2))[3, 2]
        seen.add(int(v))
    assert seen == set(range(6, 16))


@given(st.integers(0, 2**32 - 1))
def test_mutation_respects_schema(seed):
    rng = np.random.default_rng(seed)
    c = random_valid_scenario(RoadDomain(), rng)
    for _ in range(10):
        c = mutate(c, ROAD_SCHEMA, rng)
        assert ROAD_SCHEMA.conforms(c)


def test_survivor_select_keeps_exact_front():
    objs = [[i, 4 - i] for i in range(5)] + [[5, 5], [6, 6]]
    pop = make_pop(objs)
    for algo in ("nsga2", "smsemoa"):
        kept = survivor_select(pop, 5, algo)
        assert [list(k.obj) for k in kept] == [list(map(float, o)) for o in objs[:5]]


@given(st.integers(0, 2**32 - 1), st.sampled_from(["nsga2", "smsemoa"]), st.integers(5, 40))
def test_survivor_size_and_front_fill(seed, algo, size):
    rng = np.random.default_rng(seed)
    objs = rng.integers(0, 8, size=(size + 10, 2)).astype(float)
    pop = make_pop(objs)
    kept = survivor_select(pop, size, algo)
    assert len(kept) == size
    ranks = dominance_ranks(objs)
    kept_idx = {i for i, ind in enumerate(pop) if any(ind is k for k in kept)}
    cutoff = max(ranks[i] for i in kept_idx)
    # every better front is kept whole, nothing worse than the cut front is kept
    assert all(i in kept_idx for i in range(len(pop)) if ranks[i] < cutoff)


def test_smsemoa_drops_least_contributor():
    pts = [[0, 4], [1, 3.5], [2, 1], [4, 0]]
    kept = survivor_select(make_pop(pts), 3, "smsemoa")
    ref = np.max(pts, axis=0) + 1
    contrib = hv_contributions(np.array(pts), ref)
    dropped = int(np.argmin(contrib[1:3])) + 1
    assert [list(k.obj) for k in kept] == [list(map(float, p)) for i, p in enumerate(pts) if i != dropped]


def test_config_validation():
    with pytest.raises(ValueError):
        MoeaConfig(crossover_rate=1.5)
    with pytest.raises(ValueError):
        MoeaConfig(pop_size=10, suite_size=30)
    with pytest.raises(ValueError):
        MoeaConfig(algo="ga")


def small_config(**kw):
    base = dict(pop_size=20, offspring_count=10, eval_budget=80, suite_size=10)
    base.update(kw)
    return MoeaConfig(**base)


def initial(domain, rng, n):
    return [random_valid_scenario(domain, rng) for _ in range(n)]


def test_budget_equal_to_pop_size_returns_initial_members():
    dom = RoadDomain()
    init = initial(dom, np.random.default_rng(0), 20)
    res = evolve(dom, init, small_config(eval_budget=20), np.random.default_rng(1))
    assert res.log.evaluations == [20]
    keys = {c.tobytes() for c in init}
    assert all(ind.chromosome.tobytes() in keys for ind in res.suite)
    with pytest.raises(BudgetTooSmall):
        evolve(dom, init, small_config(eval_budget=19), np.random.default_rng(1))


@pytest.mark.parametrize("algo", ["nsga2", "smsemoa"])
def test_evolve_invariants(algo):
    dom = RoadDomain()
    init = initial(dom, np.random.default_rng(0), 20)
    res = evolve(dom, init, small_config(algo=algo, eval_budget=95), np.random.default_rng(2))
    assert res.log.evaluations[-1] == 95
    assert np.all(np.diff(res.log.best_f1) >= 0)
    assert len(res.population) == 20 and len(res.suite) == 10
    assert all(dom.is_valid(ind.chromosome) for ind in res.population)
    fits = [ind.fitness for ind in res.suite]
    assert all(f == pytest.approx(dom.fitness(ind.chromosome)) for f, ind in zip(fits, res.suite))


def test_evolve_is_deterministic():
    dom = RoadDomain()
    runs = []
    for _ in range(2):
        init = initial(dom, np.random.default_rng(0), 20)
        res = evolve(dom, init, small_config(), np.random.default_rng(3))
        runs.append((res.log.to_csv("r", "nsga2"), [ind.chromosome.tobytes() for ind in res.suite]))
    assert runs[0] == runs[1]


def test_random_search_rules():
    dom = RoadDomain()
    cfg = small_config(eval_budget=10)
    res = random_search(dom, cfg, np.random.default_rng(4))
    assert len(res.suite) == 10 == len(res.population)
    cfg = small_config(eval_budget=60)
    a = random_search(dom, cfg, np.random.default_rng(4))
    b = random_search(dom, cfg, np.random.default_rng(4))
    assert [i.chromosome.tobytes() for i in a.suite] == [i.chromosome.tobytes() for i in b.suite]
    key = lambda ind: (ind.rank, -ind.fitness)  # noqa: E731
    worst_kept = max(key(i) for i in a.suite)
    chosen = {id(i) for i in a.suite}
    assert all(key(i) >= worst_kept for i in a.population if id(i) not in chosen)
    with pytest.raises(BudgetTooSmall):
        random_search(dom, small_config(eval_budget=5), np.random.default_rng(4))


def test_log_csv_layout():
    log = ConvergenceLog()
    pop = make_pop([[-3, -0.5], [-1, -0.2]])
    log.record(2, pop, 0.4)
    text = log.to_csv("run0", "nsga2", 0.4)
    header, row = text.strip().split("\n")
    assert header == ",".join(LOG_FIELDS)
    assert row == "run0,nsga2,0.4,2,3.0,2.0,0.4"


def test_maze_search_beats_random_sampling():
    dom = MazeDomain()
    cfg = MoeaConfig(pop_size=40, offspring_count=20, eval_budget=240, suite_size=10)
    gains = []
    for seed in range(3):
        init = initial(dom, np.random.default_rng([seed, 0]), 40)
        ga = evolve(dom, init, cfg, np.random.default_rng([seed, 1]))
        rs = random_search(dom, cfg, np.random.default_rng([seed, 2]))
        gains.append(np.mean([i.fitness for i in ga.suite]) - np.mean([i.fitness for i in rs.suite]))
    assert np.mean(gains) > 0
