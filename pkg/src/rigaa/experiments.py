"""Experiment building blocks shared by the CLI and the acceptance tests."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Individual, random_valid_scenario
from .env import make_env, rollout_scenario
from .maze import MazeDomain
from .moea import ConvergenceLog, MoeaConfig, evolve, random_search
from .population import InitConfig, build_initial_population
from .ppo import PolicyNet, PpoConfig, train
from .road import RoadDomain
from .stats import SuiteMetrics, suite_metrics

DOMAINS = {"maze": MazeDomain, "road": RoadDomain}

# desk-scale and paper-scale search settings per problem
SEARCH_PRESETS = {
    "maze": {"desk": dict(eval_budget=2000), "paper": dict(eval_budget=8000), "offspring_count": 100},
    "road": {"desk": dict(eval_budget=10000), "paper": dict(eval_budget=65000), "offspring_count": 150},
}
DESK_RUNS, PAPER_RUNS = 10, 30
TRAIN_STEPS = {"maze": 250_000, "road": 250_000}
RQ2_RHOS = (0.2, 0.4, 0.6, 0.8, 1.0)
RQ3_ARMS = (
    ("random", "random", 0.0),
    ("nsga2", "nsga2", 0.0),
    ("rigaa", "nsga2", 0.4),
    ("smsemoa", "smsemoa", 0.0),
    ("srigaa", "smsemoa", 0.4),
)


def make_domain(problem: str):
    try:
        return DOMAINS[problem]()
    except KeyError:
        raise ValueError(f"unknown problem {problem!r}") from None


def moea_config(problem: str, algo: str = "nsga2", paper_scale: bool = False, **overrides) -> MoeaConfig:
    preset = SEARCH_PRESETS[problem]
    base = dict(preset["paper" if paper_scale else "desk"], offspring_count=preset["offspring_count"], algo=algo)
    base.update({k: v for k, v in overrides.items() if v is not None})
    return MoeaConfig(**base)


# ---------------------------------------------------------------------------
# generators


@dataclass
class GeneratedSuite:
    scenarios: list[np.ndarray]
    fitness: list[float]
    seconds_per_scenario: float

    def metrics(self, th) -> SuiteMetrics:
        return suite_metrics([Individual(c, np.array([-f, 0.0])) for c, f in zip(self.scenarios, self.fitness)], th)


def generate_suite(domain, generator: str, size: int, rng: np.random.Generator, policy=None, env=None) -> GeneratedSuite:
    if generator == "rl":
        if policy is None:
            raise ValueError("the rl generator needs a policy")
        env = env or make_env(domain.name)
        make = lambda: rollout_scenario(policy, env, rng)  # noqa: E731
    elif generator == "random":
        make = lambda: random_valid_scenario(domain, rng)  # noqa: E731
    else:
        raise ValueError(f"unknown generator {generator!r}")
    start = time.perf_counter()
    scenarios = [make() for _ in range(size)]
    elapsed = time.perf_counter() - start
    return GeneratedSuite(scenarios, [domain.fitness(c) for c in scenarios], elapsed / size)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainedAgent:
    policy: PolicyNet
    log: object
    seed: int
    rollout_fitness: float
    rollout_diversity: float


def rollout_quality(policy, problem: str, rng, n: int = 30) -> tuple[float, float]:
    domain = make_domain(problem)
    suite = generate_suite(domain, "rl", n, rng, policy)
    m = suite.metrics(domain.thresholds)
    return m.f_avs, m.d_av


def train_agents(problem: str, config: PpoConfig, seeds: Sequence[int], eval_rollouts: int = 30):
    """Train one agent per seed; return them ordered as given plus the index of the fittest."""
    agents = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        env = make_env(problem)
        net, log = train(env, config, rng)
        f, d = rollout_quality(net, problem, np.random.default_rng([seed, 1]), eval_rollouts)
        agents.append(TrainedAgent(net, log, int(seed), f, d))
    best = max(range(len(agents)), key=lambda i: (agents[i].rollout_fitness, -i))
    return agents, best


# ---------------------------------------------------------------------------
# search runs


@dataclass
class RunOutcome:
    suite: list[Individual]
    log: ConvergenceLog
    metrics: SuiteMetrics
    seconds: float


def run_search(problem: str, config: MoeaConfig, rho: float, seed: int, policy=None) -> RunOutcome:
    domain = make_domain(problem)
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    if config.algo == "random":
        result = random_search(domain, config, rng)
    else:
        init = build_initial_population(domain, InitConfig(rho=rho, pop_size=config.pop_size), rng, policy=policy)
        result = evolve(domain, init, config, rng)
    elapsed = time.perf_counter() - start
    return RunOutcome(result.suite, result.log, suite_metrics(result.suite, domain.thresholds), elapsed)


def mean_curve(logs: Sequence[ConvergenceLog]):
    """Mean, min and max best-f1 over runs at the shared checkpoints."""
    n = min(len(l.evaluations) for l in logs)
    x = np.array(logs[0].evaluations[:n])
    ys = np.array([l.best_f1[:n] for l in logs])
    return x, ys.mean(axis=0), ys.min(axis=0), ys.max(axis=0)
