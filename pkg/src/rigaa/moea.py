"""NSGA-II and SMS-EMOA for two minimised objectives, plus random search.

Objectives are ``(-R_s, -F2)``: negated surrogate fitness and negated
novelty (mean Jaccard distance to the five fittest individuals).
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .core import Individual, random_valid_scenario
from .diversity import _distance, suite_diversity
from .errors import BudgetTooSmall, ParentTooShort

ALGORITHMS = ("nsga2", "smsemoa", "random")
LOG_FIELDS = ("run_id", "algo", "rho", "evaluations", "best_f1", "mean_f1", "suite_diversity")


@dataclass(frozen=True)
class MoeaConfig:
    pop_size: int = 150
    offspring_count: int = 100
    crossover_rate: float = 0.9
    mutation_rate: float = 0.4
    eval_budget: int = 8000
    time_budget: float | None = None
    suite_size: int = 30
    dedupe_threshold: float = 0.2
    algo: str = "nsga2"
    elite_size: int = 5
    repair_attempts: int = 10
    dedupe_rounds: int = 20

    def __post_init__(self):
        if self.algo not in ALGORITHMS:
            raise ValueError(f"algo must be one of {ALGORITHMS}")
        for name in ("crossover_rate", "mutation_rate", "dedupe_threshold"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.pop_size < self.suite_size:
            raise ValueError("pop_size must be >= suite_size")
        if self.offspring_count < 1 or self.suite_size < 1:
            raise ValueError("offspring_count and suite_size must be positive")

    def with_(self, **changes) -> "MoeaConfig":
        return replace(self, **changes)


@dataclass
class ConvergenceLog:
    evaluations: list[int] = field(default_factory=list)
    best_f1: list[float] = field(default_factory=list)
    mean_f1: list[float] = field(default_factory=list)
    suite_diversity: list[float] = field(default_factory=list)

    def record(self, evaluations: int, population: Sequence[Individual], suite_div: float) -> None:
        fit = np.array([ind.fitness for ind in population])
        self.evaluations.append(int(evaluations))
        self.best_f1.append(float(fit.max()))
        self.mean_f1.append(float(fit.mean()))
        self.suite_diversity.append(float(suite_div))

    def rows(self, run_id="", algo="", rho=0.0):
        for e, b, m, d in zip(self.evaluations, self.best_f1, self.mean_f1, self.suite_diversity):
            yield (run_id, algo, rho, e, repr(b), repr(m), repr(d))

    def to_csv(self, run_id="", algo="", rho=0.0, header: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if header:
            writer.writerow(LOG_FIELDS)
        writer.writerows(self.rows(run_id, algo, rho))
        return buf.getvalue()


class SearchResult(NamedTuple):
    suite: list[Individual]
    log: ConvergenceLog
    population: list[Individual]


# ---------------------------------------------------------------------------
# dominance


def dominates(a, b) -> bool:
    return bool(np.all(a <= b) and np.any(a < b))


@njit(cache=True)
def _sort_2d(objs, order):
    n = objs.shape[0]
    rank = np.empty(n, dtype=np.int64)
    last = np.empty(n, dtype=np.int64)  # index of the last member placed in each front
    n_fronts = 0
    for p in order:
        x, y = objs[p, 0], objs[p, 1]
        # earlier points have x' <= x; only the last of each front can dominate p
        lo, hi = 0, n_fronts
        while lo < hi:
            mid = (lo + hi) // 2
            q = last[mid]
            qx, qy = objs[q, 0], objs[q, 1]
            if qy < y or (qy == y and qx < x):
                lo = mid + 1
            else:
                hi = mid
        rank[p] = lo
        last[lo] = p
        if lo == n_fronts:
            n_fronts += 1
    return rank


def _sort_general(objs: np.ndarray) -> np.ndarray:
    le = np.all(objs[:, None, :] <= objs[None, :, :], axis=2)
    lt = np.any(objs[:, None, :] < objs[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    count = dom.sum(axis=0)
    rank = np.full(len(objs), -1, dtype=np.int64)
    current = np.flatnonzero(count == 0)
    r = 0
    while current.size:
        rank[current] = r
        count = count - dom[current].sum(axis=0)
        count[rank >= 0] = -1
        current = np.flatnonzero(count == 0)
        r += 1
    return rank


def dominance_ranks(objs) -> np.ndarray:
    objs = np.asarray(objs, dtype=float)
    if objs.ndim != 2:
        raise ValueError("objs must be an (n, m) array")
    if len(objs) == 0:
        return np.zeros(0, dtype=np.int64)
    if objs.shape[1] == 2:
        return _sort_2d(np.ascontiguousarray(objs), np.lexsort((objs[:, 1], objs[:, 0])))
    return _sort_general(objs)


def non_dominated_sort(objs) -> list[np.ndarray]:
    """Partition indices into Pareto fronts (minimisation), best front first."""
    rank = dominance_ranks(objs)
    if rank.size == 0:
        return []
    return [np.flatnonzero(rank == r) for r in range(int(rank.max()) + 1)]


def crowding_distance(objs) -> np.ndarray:
    objs = np.asarray(objs, dtype=float)
    n, m = objs.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for k in range(m):
        order = np.argsort(objs[:, k], kind="stable")
        vals = objs[order, k]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = vals[-1] - vals[0]
        if span > 0:
            dist[order[1:-1]] += (vals[2:] - vals[:-2]) / span
    return dist


# ---------------------------------------------------------------------------
# hypervolume (2 objectives, minimisation)


def hypervolume_2d(points, ref) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    ref = np.asarray(ref, dtype=float)
    pts = pts[np.all(pts < ref, axis=1)]
    if len(pts) == 0:
        return 0.0
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    hv = 0.0
    prev_y = ref[1]
    for x, y in pts:
        if y < prev_y:
            hv += (ref[0] - x) * (prev_y - y)
            prev_y = y
    return float(hv)


def hv_contributions(points, ref) -> np.ndarray:
    """Exclusive hypervolume of each point of a mutually non-dominated set."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    ref = np.asarray(ref, dtype=float)
    n = len(pts)
    order = np.lexsort((-pts[:, 1], pts[:, 0]))
    xs = pts[order, 0]
    ys = pts[order, 1]
    right = np.append(xs[1:], ref[0])
    above = np.insert(ys[:-1], 0, ref[1])
    contrib = np.zeros(n)
    contrib[order] = np.clip(right - xs, 0, None) * np.clip(above - ys, 0, None)
    return contrib


def _truncate_hv(objs: np.ndarray, keep: int, ref: np.ndarray) -> np.ndarray:
    """Drop least contributors one at a time; the two extreme points are never dropped."""
    alive = list(range(len(objs)))
    protected = {int(np.lexsort((objs[:, 1], objs[:, 0]))[0]), int(np.lexsort((objs[:, 0], objs[:, 1]))[0])}
    while len(alive) > keep:
        contrib = hv_contributions(objs[alive], ref)
        candidates = [(c, i) for c, i in zip(contrib, alive) if i not in protected or len(alive) <= len(protected)]
        _, worst = min(candidates)
        alive.remove(worst)
    return np.array(alive, dtype=np.int64)


# ---------------------------------------------------------------------------
# selection and variation


def assign_rank_density(population: Sequence[Individual]) -> None:
    """Set each individual's dominance rank and crowding distance in place."""
    objs = np.array([ind.obj for ind in population])
    for r, front in enumerate(non_dominated_sort(objs)):
        for idx, d in zip(front, crowding_distance(objs[front])):
            population[idx].rank = r
            population[idx].density = float(d)


def tournament_select(population: Sequence[Individual], rng: np.random.Generator) -> Individual:
    if len(population) == 0:
        raise ValueError("empty population")
    if len(population) == 1:
        return population[0]
    i, j = rng.choice(len(population), size=2, replace=False)
    a, b = population[i], population[j]
    if a.rank != b.rank:
        return a if a.rank < b.rank else b
    if a.density != b.density:
        return a if a.density > b.density else b
    return a if rng.random() < 0.5 else b


def one_point_crossover(p1: np.ndarray, p2: np.ndarray, rng: np.random.Generator, k: int | None = None):
    n = min(len(p1), len(p2))
    if n < 2:
        raise ParentTooShort("both parents need at least 2 elements")
    if k is None:
        k = int(rng.integers(1, n))
    elif not 1 <= k <= n - 1:
        raise ValueError(f"crossover point {k} outside [1, {n - 1}]")
    c1 = np.concatenate([p1[:k], p2[k:]]).astype(np.int64, copy=True)
    c2 = np.concatenate([p2[:k], p1[k:]]).astype(np.int64, copy=True)
    return c1, c2


def exchange_mutation(chrom: np.ndarray, rng: np.random.Generator, pair=None) -> np.ndarray:
    out = np.array(chrom, dtype=np.int64, copy=True)
    if len(out) < 2:
        raise ParentTooShort("exchange needs at least 2 elements")
    i, j = pair if pair is not None else rng.choice(len(out), size=2, replace=False)
    out[[i, j]] = out[[j, i]]
    return out


def change_mutation(chrom: np.ndarray, schema, rng: np.random.Generator, where=None) -> np.ndarray:
    out = np.array(chrom, dtype=np.int64, copy=True)
    if where is None:
        i = int(rng.integers(len(out)))
        k = int(rng.integers(schema.n_attributes))
    else:
        i, k = where
    attr = schema.attributes[k]
    old = int(out[i, k])
    if attr.hi > attr.lo:
        # uniform over the range minus the current value
        new = int(rng.integers(attr.lo, attr.hi))
        if new >= old:
            new += 1
        out[i, k] = new
    return out


def mutate(chrom: np.ndarray, schema, rng: np.random.Generator) -> np.ndarray:
    if len(chrom) < 2:
        raise ParentTooShort("mutation needs at least 2 elements")
    if rng.random() < 0.5:
        return exchange_mutation(chrom, rng)
    return change_mutation(chrom, schema, rng)


def survivor_select(combined: Sequence[Individual], pop_size: int, algo: str = "nsga2") -> list[Individual]:
    """(mu + lambda) truncation by fronts, then crowding (NSGA-II) or hypervolume (SMS-EMOA)."""
    if len(combined) < pop_size:
        raise ValueError("combined set smaller than pop_size")
    objs = np.array([ind.obj for ind in combined])
    chosen: list[int] = []
    for front in non_dominated_sort(objs):
        room = pop_size - len(chosen)
        if room == 0:
            break
        if len(front) <= room:
            chosen.extend(int(i) for i in front)
            continue
        if algo == "smsemoa":
            ref = objs.max(axis=0) + 1.0
            keep = _truncate_hv(objs[front], room, ref)
            chosen.extend(int(front[i]) for i in sorted(keep))
        else:
            cd = crowding_distance(objs[front])
            order = np.argsort(-cd, kind="stable")
            chosen.extend(int(front[i]) for i in sorted(order[:room]))
        break
    survivors = [combined[i] for i in chosen]
    assign_rank_density(survivors)
    return survivors


# ---------------------------------------------------------------------------
# objectives


def assign_objectives(population: Sequence[Individual], th, elite_size: int = 5) -> None:
    """Set ``obj = (-R_s, -F2)`` given each individual's fitness in ``obj[0]``.

    F2 is the mean distance to the ``elite_size`` fittest members of
    ``population`` (ties broken by position).
    """
    fit = np.array([ind.fitness for ind in population])
    elite_idx = np.argsort(-fit, kind="stable")[:elite_size]
    t = np.ascontiguousarray(th, dtype=np.int64)
    elite = [np.ascontiguousarray(population[i].chromosome) for i in elite_idx]
    for ind in population:
        c = np.ascontiguousarray(ind.chromosome)
        if elite:
            novelty = sum(_distance(c, e, t) for e in elite) / len(elite)
        else:
            novelty = 1.0
        ind.obj = np.array([-ind.fitness, -novelty])


def select_suite(population: Sequence[Individual], size: int) -> list[Individual]:
    """The ``size`` best individuals by (rank, larger fitness)."""
    order = sorted(range(len(population)), key=lambda i: (population[i].rank, -population[i].fitness, i))
    return [population[i] for i in order[:size]]


def _evaluated(domain, chrom, origin) -> Individual:
    return Individual(np.ascontiguousarray(chrom, dtype=np.int64), np.array([-domain.fitness(chrom), 0.0]), origin=origin)


def _log_point(log, evaluations, population, config, th):
    suite = select_suite(population, config.suite_size)
    div = suite_diversity([s.chromosome for s in suite], th) if len(suite) >= 2 else 0.0
    log.record(evaluations, population, div)


# ---------------------------------------------------------------------------
# search loops


class _Offspring:
    """Builds a generation of valid offspring that are not duplicates."""

    def __init__(self, domain, config: MoeaConfig, rng):
        self.domain = domain
        self.config = config
        self.rng = rng
        self.th = np.ascontiguousarray(domain.thresholds, dtype=np.int64)

    def _repair(self, chrom):
        value = self.domain.evaluate(chrom)
        tries = 0
        while not np.isfinite(value) and tries < self.config.repair_attempts:
            chrom = mutate(chrom, self.domain.schema, self.rng)
            value = self.domain.evaluate(chrom)
            tries += 1
        if not np.isfinite(value):
            chrom = random_valid_scenario(self.domain, self.rng)
            value = self.domain.evaluate(chrom)
        return np.ascontiguousarray(chrom, dtype=np.int64), float(value)

    def _children(self, population):
        cfg = self.config
        p1 = tournament_select(population, self.rng)
        p2 = tournament_select(population, self.rng)
        if p2 is p1:
            p2 = tournament_select(population, self.rng)
        a, b = p1.chromosome, p2.chromosome
        if self.rng.random() < cfg.crossover_rate and min(len(a), len(b)) >= 2:
            a, b = one_point_crossover(a, b, self.rng)
        else:
            a, b = a.copy(), b.copy()
        out = []
        for c in (a, b):
            if self.rng.random() < cfg.mutation_rate and len(c) >= 2:
                c = mutate(c, self.domain.schema, self.rng)
            out.append(c)
        return out

    def _is_new(self, chrom, pool) -> bool:
        thr = self.config.dedupe_threshold
        return all(_distance(p, chrom, self.th) >= thr for p in pool)

    def make(self, population, n: int) -> list[Individual]:
        pool = [np.ascontiguousarray(ind.chromosome) for ind in population]
        accepted: list[Individual] = []
        rounds = 0
        while len(accepted) < n:
            for c in self._children(population):
                if len(accepted) == n:
                    break
                c, value = self._repair(c)
                if rounds < self.config.dedupe_rounds * n and not self._is_new(c, pool):
                    rounds += 1
                    continue
                pool.append(c)
                accepted.append(Individual(c, np.array([-value, 0.0]), origin="offspring"))
        return accepted


def _as_individuals(domain, initial) -> list[Individual]:
    out = []
    for item in initial:
        if isinstance(item, Individual):
            out.append(_evaluated(domain, item.chromosome, item.origin))
        else:
            out.append(_evaluated(domain, item, "random"))
    return out


def evolve(domain, initial_population, config: MoeaConfig, rng: np.random.Generator) -> SearchResult:
    """Run NSGA-II or SMS-EMOA from ``initial_population`` until the budget is spent.

    Evaluations count surrogate evaluations of accepted individuals: the
    initial population plus every offspring that enters selection.
    """
    if config.eval_budget < config.pop_size:
        raise BudgetTooSmall(f"eval_budget {config.eval_budget} < pop_size {config.pop_size}")
    if len(initial_population) != config.pop_size:
        raise ValueError(f"initial population has {len(initial_population)} members, expected {config.pop_size}")
    algo = "nsga2" if config.algo == "random" else config.algo
    th = domain.thresholds
    start = time.perf_counter()
    population = _as_individuals(domain, initial_population)
    evaluations = len(population)
    assign_objectives(population, th, config.elite_size)
    assign_rank_density(population)
    log = ConvergenceLog()
    _log_point(log, evaluations, population, config, th)
    breeder = _Offspring(domain, config, rng)
    while evaluations < config.eval_budget:
        if config.time_budget is not None and time.perf_counter() - start >= config.time_budget:
            break
        n = min(config.offspring_count, config.eval_budget - evaluations)
        offspring = breeder.make(population, n)
        evaluations += len(offspring)
        combined = population + offspring
        assign_objectives(combined, th, config.elite_size)
        population = survivor_select(combined, config.pop_size, algo)
        _log_point(log, evaluations, population, config, th)
    return SearchResult(select_suite(population, config.suite_size), log, population)


def random_search(domain, config: MoeaConfig, rng: np.random.Generator) -> SearchResult:
    """Sample ``eval_budget`` valid scenarios and keep the best suite by (rank, fitness)."""
    if config.eval_budget < config.suite_size:
        raise BudgetTooSmall(f"eval_budget {config.eval_budget} < suite_size {config.suite_size}")
    th = domain.thresholds
    start = time.perf_counter()
    samples: list[Individual] = []
    log = ConvergenceLog()
    step = config.offspring_count
    next_log = min(config.pop_size, config.eval_budget)
    while len(samples) < config.eval_budget:
        if config.time_budget is not None and time.perf_counter() - start >= config.time_budget:
            break
        samples.append(_evaluated(domain, random_valid_scenario(domain, rng), "random"))
        if len(samples) == next_log or len(samples) == config.eval_budget:
            assign_objectives(samples, th, config.elite_size)
            assign_rank_density(samples)
            _log_point(log, len(samples), samples, config, th)
            next_log = min(next_log + step, config.eval_budget)
    if len(samples) < config.suite_size:
        raise BudgetTooSmall("time budget ran out before a full suite was sampled")
    assign_objectives(samples, th, config.elite_size)
    assign_rank_density(samples)
    return SearchResult(select_suite(samples, config.suite_size), log, samples)
