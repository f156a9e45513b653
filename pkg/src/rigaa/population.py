"""Initial populations mixing policy rollouts with random valid scenarios."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Individual, random_valid_scenario
from .env import make_env, rollout_scenario
from .ppo import PolicyNet, load_policy


@dataclass(frozen=True)
class InitConfig:
    rho: float = 0.0
    pop_size: int = 150
    policy_path: str | None = None
    bernoulli: bool = False  # per-individual coin flips instead of an exact split

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must be in [0, 1]")
        if self.pop_size < 1:
            raise ValueError("pop_size must be positive")

    @property
    def n_rl(self) -> int:
        # round half up, so rho * pop_size = k.5 is never rounded to even
        return int(np.floor(self.rho * self.pop_size + 0.5))


def build_initial_population(
    domain, config: InitConfig, rng: np.random.Generator, policy: PolicyNet | None = None
) -> list[Individual]:
    """RL-generated individuals first, then random ones.

    With the exact split, ``round(rho * pop_size)`` individuals come from the
    policy.  ``policy`` may be passed directly; otherwise it is loaded from
    ``config.policy_path`` when needed.
    """
    if config.bernoulli:
        flags = rng.random(config.pop_size) < config.rho
        n_rl = int(flags.sum())
    else:
        n_rl = config.n_rl
    out: list[Individual] = []
    if n_rl:
        env = make_env(domain.name)
        if policy is None:
            if config.policy_path is None:
                raise ValueError("rho > 0 needs a policy or policy_path")
            policy = load_policy(
                config.policy_path,
                schema_id=domain.schema.schema_id,
                obs_len=env.obs_len,
                action_dims=env.actions.dims,
            )
        for _ in range(n_rl):
            out.append(Individual(rollout_scenario(policy, env, rng), origin="rl"))
    for _ in range(config.pop_size - n_rl):
        out.append(Individual(random_valid_scenario(domain, rng), origin="random"))
    return out
