"""Scenario construction as an MDP: one element per step, shaped reward.

Valid step:   r = R_s + R_1 + R_2 + R_3
Invalid step: r = R_4 and the episode ends.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import ScenarioSchema
from .errors import EpisodeFinished, GenerationExhausted
from .maze import GRID, MAZE_SCHEMA, MazeDomain, prefix_fitness
from .road import ROAD_SCHEMA, RoadDomain

ROLLOUT_ATTEMPTS = 20


@dataclass(frozen=True)
class ActionSpec:
    """Affine map from per-dimension action indices to attribute values.

    ``targets[d]`` is the attribute filled by dimension ``d``.  Bin ``i`` of a
    dimension with ``n`` bins maps to ``lo + f((hi - lo) * i / (n - 1))``
    where ``f`` is round-half-up or ceil depending on ``rounding``.
    """

    dims: tuple[int, ...]
    targets: tuple[int, ...]
    schema: ScenarioSchema
    rounding: str = "ceil"

    def __post_init__(self):
        if len(self.dims) != len(self.targets) or sorted(self.targets) != list(range(self.schema.n_attributes)):
            raise ValueError("each attribute must be targeted by exactly one dimension")
        if self.rounding not in ("ceil", "round"):
            raise ValueError("rounding must be 'ceil' or 'round'")
        if any(n < 2 for n in self.dims):
            raise ValueError("every dimension needs at least 2 bins")

    def bin_value(self, dim: int, index: int) -> int:
        n = self.dims[dim]
        if not 0 <= index < n:
            raise ValueError(f"action index {index} out of range for dimension {dim} ({n} bins)")
        attr = self.schema.attributes[self.targets[dim]]
        span = attr.hi - attr.lo
        num = span * index
        den = n - 1
        if self.rounding == "ceil":
            offset = -((-num) // den)
        else:
            offset = (2 * num + den) // (2 * den)
        return attr.lo + offset

    def decode(self, action) -> np.ndarray:
        action = np.asarray(action, dtype=np.int64).reshape(-1)
        if action.shape[0] != len(self.dims):
            raise ValueError(f"expected {len(self.dims)} action indices, got {action.shape[0]}")
        row = np.zeros(self.schema.n_attributes, dtype=np.int64)
        for d, idx in enumerate(action):
            row[self.targets[d]] = self.bin_value(d, int(idx))
        return row


# type, size (7 bins), position (37 bins)
MAZE_ACTIONS = ActionSpec((2, 7, 37), (0, 2, 1), MAZE_SCHEMA, rounding="round")
ROAD_ACTIONS = ActionSpec((3, 25, 35), (0, 1, 2), ROAD_SCHEMA, rounding="ceil")


@dataclass(frozen=True)
class RewardConfig:
    th: float
    r3: float
    r4: float


MAZE_REWARD = RewardConfig(th=110.0, r3=10.0, r4=-100.0)
ROAD_REWARD = RewardConfig(th=5.0, r3=1.0, r4=-50.0)


class StepOutcome(NamedTuple):
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


class ScenarioEnv:
    """Base environment; subclasses supply prefix evaluation and novelty keys."""

    name = ""
    schema: ScenarioSchema
    actions: ActionSpec
    reward_config: RewardConfig
    episode_length: int

    def __init__(self, reward: RewardConfig | None = None, actions: ActionSpec | None = None, record: bool = False):
        if reward is not None:
            self.reward_config = reward
        if actions is not None:
            self.actions = actions
        self.record = record
        self.trace: list[dict] = []
        self.matrix = np.zeros((self.episode_length, self.schema.n_attributes), dtype=np.int64)
        self.cursor = 0
        self.last_rs = 0.0
        self.seen: tuple[set, ...] = ()
        self.done = True
        self._scale = self.schema.hi.astype(float)

    @property
    def obs_len(self) -> int:
        return self.matrix.size

    def observation(self) -> np.ndarray:
        return (self.matrix / self._scale).reshape(-1)

    # hooks --------------------------------------------------------------
    def prefix_fitness(self, n_filled: int) -> float:
        raise NotImplementedError

    def novelty_keys(self, row: np.ndarray) -> tuple:
        """Per-attribute values that earn the exploration bonus when unseen."""
        raise NotImplementedError

    # MDP -----------------------------------------------------------------
    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.matrix[:] = 0
        lo, hi = self.schema.lo, self.schema.hi
        self.matrix[0] = rng.integers(lo, hi + 1)
        self.cursor = 1
        keys = self.novelty_keys(self.matrix[0])
        self.seen = tuple(set() for _ in keys)
        self._mark_seen(keys)
        self.last_rs = self.prefix_fitness(1)
        self.done = False
        if self.record:
            self.trace.append({"event": "reset", "element": self.matrix[0].tolist(), "rs": self.last_rs})
        return self.observation()

    def _mark_seen(self, keys) -> bool:
        novel = False
        for s, k in zip(self.seen, keys):
            if k is None:
                continue
            if k not in s:
                novel = True
                s.add(k)
        return novel

    def step(self, action) -> StepOutcome:
        if self.done:
            raise EpisodeFinished("call reset() before stepping a finished episode")
        action = np.asarray(action, dtype=np.int64).reshape(-1)
        row = self.actions.decode(action)
        self.matrix[self.cursor] = row
        self.cursor += 1
        rs = self.prefix_fitness(self.cursor)
        cfg = self.reward_config
        if not np.isfinite(rs):
            reward = cfg.r4
            self.done = True
            info = {"valid": False, "rs": None, "r1": 0.0, "r2": 0.0, "r3": 0.0, "r4": cfg.r4}
        else:
            r1 = rs - self.last_rs
            r2 = rs if rs > cfg.th else 0.0
            r3 = cfg.r3 if self._mark_seen(self.novelty_keys(row)) else 0.0
            reward = rs + r1 + r2 + r3
            self.last_rs = rs
            self.done = self.cursor >= self.episode_length
            info = {"valid": True, "rs": rs, "r1": r1, "r2": r2, "r3": r3, "r4": 0.0}
        if self.record:
            self.trace.append(
                {"event": "step", "action": action.tolist(), "element": row.tolist(), "reward": reward,
                 "done": self.done, **info}
            )
        return StepOutcome(self.observation(), float(reward), self.done, info)

    def scenario(self, n: int | None = None) -> np.ndarray:
        return self.matrix[: self.cursor if n is None else n].copy()

    def dump_trace(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.trace:
                fh.write(json.dumps(rec) + "\n")


class MazeEnv(ScenarioEnv):
    """Walls are placed in element order; unfilled elements are left open."""

    name = "maze"
    schema = MAZE_SCHEMA
    actions = MAZE_ACTIONS
    reward_config = MAZE_REWARD
    episode_length = GRID

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.domain = MazeDomain()

    def prefix_fitness(self, n_filled: int) -> float:
        return prefix_fitness(self.matrix, n_filled)

    def novelty_keys(self, row):
        return (int(row[1]), int(row[2]))


class RoadEnv(ScenarioEnv):
    """Segments are appended to the road; the bonus tracks the attribute the segment uses."""

    name = "road"
    schema = ROAD_SCHEMA
    actions = ROAD_ACTIONS
    reward_config = ROAD_REWARD
    episode_length = ROAD_SCHEMA.max_elements

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.domain = RoadDomain()

    def prefix_fitness(self, n_filled: int) -> float:
        value = self.domain.evaluate(self.matrix[:n_filled])
        return value if np.isfinite(value) else np.inf

    def novelty_keys(self, row):
        if row[0] == 0:
            return (int(row[1]), None)
        return (None, int(row[2]))


ENVS = {"maze": MazeEnv, "road": RoadEnv}


def make_env(problem: str, **kwargs) -> ScenarioEnv:
    try:
        return ENVS[problem](**kwargs)
    except KeyError:
        raise ValueError(f"unknown problem {problem!r}") from None


class UniformPolicy:
    """Picks every action index uniformly at random."""

    def __init__(self, dims):
        self.dims = tuple(dims)

    def act(self, obs, rng: np.random.Generator, deterministic: bool = False) -> np.ndarray:
        return np.array([rng.integers(n) for n in self.dims], dtype=np.int64)


def rollout_scenario(
    policy,
    env: ScenarioEnv,
    rng: np.random.Generator,
    *,
    deterministic: bool = False,
    max_episodes: int = ROLLOUT_ATTEMPTS,
    keep_valid_prefix: bool | None = None,
) -> np.ndarray:
    """Run episodes until one yields a valid scenario.

    A maze must be complete.  For variable-length schemas an episode that
    ends on an invalid segment still yields its valid prefix, provided the
    prefix is long enough for the schema (``keep_valid_prefix``).
    """
    if keep_valid_prefix is None:
        keep_valid_prefix = not env.schema.fixed_length
    for _ in range(max_episodes):
        obs = env.reset(rng)
        outcome = None
        while not env.done:
            outcome = env.step(policy.act(obs, rng, deterministic))
            obs = outcome.observation
        if outcome is None or outcome.info["valid"]:
            n = env.cursor
        elif keep_valid_prefix:
            n = env.cursor - 1
        else:
            continue
        if n >= env.schema.min_elements:
            return env.scenario(n)
    raise GenerationExhausted(f"{env.name}: no valid scenario in {max_episodes} episodes")
