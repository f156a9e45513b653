"""Proximal policy optimisation in plain numpy (float64, hand-written backprop).

Actor and critic are separate 64-64 tanh MLPs.  The actor emits one block
of logits per action dimension; the joint log-probability of an action is
the sum of the per-dimension categorical log-probabilities.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CorruptPolicyFile, NonFiniteLoss

FORMAT_VERSION = 1
MAGIC = b"RIGAAPOL"
LOG_FIELDS = ("step", "mean_episode_reward", "policy_loss", "value_loss", "entropy")


@dataclass(frozen=True)
class PpoConfig:
    learning_rate: float = 3e-4
    n_steps: int = 2048
    batch_size: int = 64
    epochs: int = 10
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_range: float = 0.2
    ent_coef: float = 0.005
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    total_steps: int = 100_000
    hidden: tuple[int, ...] = (64, 64)
    adam_eps: float = 1e-5
    normalize_reward: bool = True
    reward_clip: float = 10.0

    def __post_init__(self):
        if self.n_steps < 1 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("n_steps, batch_size and epochs must be positive")
        if self.total_steps < 1:
            raise ValueError("total_steps must be positive")


@dataclass(frozen=True)
class LossStats:
    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float
    clip_fraction: float


# ---------------------------------------------------------------------------
# network


def _orthogonal(rng, shape, gain):
    a = rng.standard_normal(shape)
    flat = a if shape[0] >= shape[1] else a.T
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return gain * q


class _Mlp:
    """tanh MLP with a linear output layer; caches activations for backprop."""

    def __init__(self, params: dict, prefix: str):
        self.p = params
        self.prefix = prefix
        self.n_layers = sum(1 for k in params if k.startswith(prefix + "W"))

    def forward(self, x):
        acts = [x]
        h = x
        for i in range(1, self.n_layers + 1):
            z = h @ self.p[f"{self.prefix}W{i}"] + self.p[f"{self.prefix}b{i}"]
            h = np.tanh(z) if i < self.n_layers else z
            acts.append(h)
        return h, acts

    def backward(self, acts, grad_out, grads: dict):
        g = grad_out
        for i in range(self.n_layers, 0, -1):
            h_in = acts[i - 1]
            grads[f"{self.prefix}W{i}"] = h_in.T @ g
            grads[f"{self.prefix}b{i}"] = g.sum(axis=0)
            if i > 1:
                g = (g @ self.p[f"{self.prefix}W{i}"].T) * (1.0 - acts[i - 1] ** 2)


class PolicyNet:
    """Separate actor (``pi_``) and critic (``vf_``) networks."""

    def __init__(self, obs_len: int, action_dims, hidden=(64, 64), rng=None, schema_id: str = ""):
        self.obs_len = int(obs_len)
        self.action_dims = tuple(int(d) for d in action_dims)
        self.hidden = tuple(int(h) for h in hidden)
        self.schema_id = schema_id
        self.params: dict[str, np.ndarray] = {}
        if rng is not None:
            self._init(rng)
        self._split = np.cumsum(self.action_dims)[:-1]

    def _init(self, rng):
        sizes = (self.obs_len, *self.hidden)
        for prefix, out, out_gain in (("pi_", sum(self.action_dims), 0.01), ("vf_", 1, 1.0)):
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
                self.params[f"{prefix}W{i}"] = _orthogonal(rng, (a, b), math.sqrt(2))
                self.params[f"{prefix}b{i}"] = np.zeros(b)
            k = len(self.hidden) + 1
            self.params[f"{prefix}W{k}"] = _orthogonal(rng, (sizes[-1], out), out_gain)
            self.params[f"{prefix}b{k}"] = np.zeros(out)

    @property
    def actor(self):
        return _Mlp(self.params, "pi_")

    @property
    def critic(self):
        return _Mlp(self.params, "vf_")

    def tensor_names(self):
        return sorted(self.params)

    # inference ------------------------------------------------------------
    def log_probs(self, obs):
        """Per-dimension log-softmax blocks for a batch of observations."""
        logits, _ = self.actor.forward(np.atleast_2d(obs))
        return [_log_softmax(z) for z in np.split(logits, self._split, axis=1)]

    def value(self, obs):
        v, _ = self.critic.forward(np.atleast_2d(obs))
        return v[:, 0]

    def act(self, obs, rng: np.random.Generator, deterministic: bool = False) -> np.ndarray:
        heads = self.log_probs(obs)
        if deterministic:
            return np.array([int(np.argmax(h[0])) for h in heads], dtype=np.int64)
        out = np.empty(len(heads), dtype=np.int64)
        u = rng.random(len(heads))
        for d, h in enumerate(heads):
            cdf = np.cumsum(np.exp(h[0]))
            out[d] = min(int(np.searchsorted(cdf, u[d] * cdf[-1], side="right")), len(cdf) - 1)
        return out

    def evaluate_actions(self, obs, actions):
        heads = self.log_probs(obs)
        rows = np.arange(len(actions))
        return sum(h[rows, actions[:, d]] for d, h in enumerate(heads))

    def copy(self) -> "PolicyNet":
        net = PolicyNet(self.obs_len, self.action_dims, self.hidden, schema_id=self.schema_id)
        net.params = {k: v.copy() for k, v in self.params.items()}
        return net


def _log_softmax(z):
    m = z.max(axis=1, keepdims=True)
    s = z - m
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


# ---------------------------------------------------------------------------
# loss and gradients


def ppo_loss_and_grad(net: PolicyNet, batch: dict, config: PpoConfig, normalize: bool = True):
    """Total PPO loss on ``batch`` and its gradient with respect to every parameter.

    ``batch`` holds ``obs``, ``actions``, ``old_logp``, ``advantages`` and
    ``returns``.
    """
    obs = batch["obs"]
    actions = batch["actions"]
    n = len(obs)
    adv = batch["advantages"]
    if normalize and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    logits, a_acts = net.actor.forward(obs)
    blocks = np.split(logits, net._split, axis=1)
    rows = np.arange(n)
    logp = np.zeros(n)
    entropy = np.zeros(n)
    probs, logps = [], []
    for d, z in enumerate(blocks):
        lp = _log_softmax(z)
        p = np.exp(lp)
        logp += lp[rows, actions[:, d]]
        entropy += -(p * lp).sum(axis=1)
        probs.append(p)
        logps.append(lp)

    ratio = np.exp(logp - batch["old_logp"])
    eps = config.clip_range
    clipped = np.clip(ratio, 1 - eps, 1 + eps)
    surr1 = ratio * adv
    surr2 = clipped * adv
    unclipped = surr1 <= surr2
    policy_loss = -np.mean(np.minimum(surr1, surr2))

    values, c_acts = net.critic.forward(obs)
    values = values[:, 0]
    value_loss = np.mean((batch["returns"] - values) ** 2)
    ent = np.mean(entropy)
    total = policy_loss + config.vf_coef * value_loss - config.ent_coef * ent

    # d total / d logp, per sample
    g_logp = np.where(unclipped, -adv * ratio / n, 0.0)
    g_blocks = []
    for d, (p, lp) in enumerate(zip(probs, logps)):
        onehot = np.zeros_like(p)
        onehot[rows, actions[:, d]] = 1.0
        h = -(p * lp).sum(axis=1, keepdims=True)
        d_entropy = -p * (lp + h)
        g_blocks.append(g_logp[:, None] * (onehot - p) - config.ent_coef / n * d_entropy)
    grads: dict[str, np.ndarray] = {}
    net.actor.backward(a_acts, np.concatenate(g_blocks, axis=1), grads)
    g_v = (config.vf_coef * 2.0 / n * (values - batch["returns"]))[:, None]
    net.critic.backward(c_acts, g_v, grads)

    stats = LossStats(
        float(policy_loss),
        float(value_loss),
        float(ent),
        float(np.mean((ratio - 1) - (logp - batch["old_logp"]))),
        float(np.mean(np.abs(ratio - 1) > eps)),
    )
    return float(total), grads, stats


class Adam:
    def __init__(self, params: dict, lr: float, eps: float = 1e-8, betas=(0.9, 0.999)):
        self.lr = lr
        self.eps = eps
        self.b1, self.b2 = betas
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        for k in grads:
            grads[k] = grads[k] * scale
    return norm


# ---------------------------------------------------------------------------
# rollouts


@dataclass
class RolloutBuffer:
    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray  # episode ended after this step
    last_value: float = 0.0
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @classmethod
    def empty(cls, n, obs_len, n_dims):
        return cls(
            np.zeros((n, obs_len)),
            np.zeros((n, n_dims), dtype=np.int64),
            np.zeros(n),
            np.zeros(n),
            np.zeros(n),
            np.zeros(n, dtype=bool),
        )


def compute_gae(rewards, values, dones, last_value, gamma, lam):
    """Generalised advantage estimates and returns (``advantages + values``)."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    n = len(rewards)
    adv = np.zeros(n)
    gae = 0.0
    for t in range(n - 1, -1, -1):
        next_value = last_value if t == n - 1 else values[t + 1]
        live = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * live - values[t]
        gae = delta + gamma * lam * live * gae
        adv[t] = gae
    return adv, adv + values


def ppo_update(net: PolicyNet, buffer: RolloutBuffer, config: PpoConfig, optimizer: Adam, rng) -> LossStats:
    n = len(buffer.rewards)
    stats = []
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            batch = {
                "obs": buffer.obs[idx],
                "actions": buffer.actions[idx],
                "old_logp": buffer.logp[idx],
                "advantages": buffer.advantages[idx],
                "returns": buffer.returns[idx],
            }
            loss, grads, st = ppo_loss_and_grad(net, batch, config)
            if not np.isfinite(loss):
                raise NonFiniteLoss(
                    f"non-finite loss (policy {st.policy_loss}, value {st.value_loss}, entropy {st.entropy})"
                )
            clip_grad_norm(grads, config.max_grad_norm)
            optimizer.step(net.params, grads)
            stats.append(st)
    means = np.mean([[getattr(s, f) for f in LossStats.__dataclass_fields__] for s in stats], axis=0)
    return LossStats(*(float(m) for m in means))


class ReturnScaler:
    """Divides rewards by the running std of the discounted return."""

    def __init__(self, gamma: float, clip: float):
        self.gamma = gamma
        self.clip = clip
        self.ret = 0.0
        self.count = 1e-4
        self.mean = 0.0
        self.var = 1.0

    def __call__(self, reward: float, done: bool) -> float:
        self.ret = self.ret * self.gamma + reward
        # Welford-style merge of a single sample
        delta = self.ret - self.mean
        total = self.count + 1
        self.mean += delta / total
        self.var = (self.var * self.count + delta * delta * self.count / total) / total
        self.count = total
        if done:
            self.ret = 0.0
        return float(np.clip(reward / math.sqrt(self.var + 1e-8), -self.clip, self.clip))


@dataclass
class TrainingLog:
    rows: list[tuple] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        w.writerows(self.rows)
        return buf.getvalue()

    @property
    def mean_rewards(self) -> np.ndarray:
        return np.array([float(r[1]) for r in self.rows])


def train(env, config: PpoConfig, rng: np.random.Generator, *, net: PolicyNet | None = None, callback=None):
    """Alternate ``n_steps`` of experience collection with a PPO update.

    Returns ``(policy, TrainingLog)``.  The mean episode reward of a window
    covers the episodes that finished inside it (NaN if none did).
    """
    if net is None:
        net = PolicyNet(env.obs_len, env.actions.dims, config.hidden, rng=rng, schema_id=env.schema.schema_id)
    optimizer = Adam(net.params, config.learning_rate, eps=config.adam_eps)
    log = TrainingLog()
    n_iter = -(-config.total_steps // config.n_steps)
    obs = env.reset(rng)
    ep_reward = 0.0
    steps = 0
    scaler = ReturnScaler(config.gamma, config.reward_clip) if config.normalize_reward else None
    for _ in range(n_iter):
        buf = RolloutBuffer.empty(config.n_steps, env.obs_len, len(env.actions.dims))
        finished = []
        for t in range(config.n_steps):
            action = net.act(obs, rng)
            buf.obs[t] = obs
            buf.actions[t] = action
            buf.logp[t] = net.evaluate_actions(obs[None, :], action[None, :])[0]
            buf.values[t] = net.value(obs)[0]
            out = env.step(action)
            buf.rewards[t] = scaler(out.reward, out.done) if scaler else out.reward
            buf.dones[t] = out.done
            ep_reward += out.reward
            if out.done:
                finished.append(ep_reward)
                ep_reward = 0.0
                obs = env.reset(rng)
            else:
                obs = out.observation
        steps += config.n_steps
        buf.last_value = float(net.value(obs)[0])
        buf.advantages, buf.returns = compute_gae(
            buf.rewards, buf.values, buf.dones, buf.last_value, config.gamma, config.gae_lambda
        )
        st = ppo_update(net, buf, config, optimizer, rng)
        mean_r = float(np.mean(finished)) if finished else float("nan")
        log.rows.append((steps, repr(mean_r), repr(st.policy_loss), repr(st.value_loss), repr(st.entropy)))
        if callback is not None:
            callback(steps, mean_r, st)
    return net, log


# ---------------------------------------------------------------------------
# persistence


def policy_bytes(net: PolicyNet) -> bytes:
    names = net.tensor_names()
    header = {
        "format_version": FORMAT_VERSION,
        "schema_id": net.schema_id,
        "obs_len": net.obs_len,
        "action_dims": list(net.action_dims),
        "hidden": list(net.hidden),
        "tensors": [{"name": k, "shape": list(net.params[k].shape)} for k in names],
    }
    head = json.dumps(header, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(net.params[k], dtype="<f8").tobytes() for k in names)
    return MAGIC + struct.pack("<I", len(head)) + head + body


def save_policy(net: PolicyNet, path) -> str:
    """Write the policy and return the SHA-256 digest of the file contents."""
    data = policy_bytes(net)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def load_policy(path, *, schema_id: str | None = None, obs_len: int | None = None, action_dims=None) -> PolicyNet:
    """Read a policy file, checking the header against the expected layout if given."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC) or len(data) < len(MAGIC) + 4:
        raise CorruptPolicyFile(f"{path}: not a policy file")
    (n,) = struct.unpack("<I", data[len(MAGIC) : len(MAGIC) + 4])
    start = len(MAGIC) + 4
    try:
        header = json.loads(data[start : start + n])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptPolicyFile(f"{path}: unreadable header ({exc})") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise CorruptPolicyFile(f"{path}: unsupported format_version {header.get('format_version')}")
    if schema_id is not None and header["schema_id"] != schema_id:
        raise CorruptPolicyFile(f"{path}: policy is for {header['schema_id']!r}, expected {schema_id!r}")
    if obs_len is not None and header["obs_len"] != obs_len:
        raise CorruptPolicyFile(f"{path}: obs_len {header['obs_len']} != {obs_len}")
    if action_dims is not None and list(header["action_dims"]) != list(action_dims):
        raise CorruptPolicyFile(f"{path}: action_dims {header['action_dims']} != {list(action_dims)}")
    net = PolicyNet(header["obs_len"], header["action_dims"], header["hidden"], schema_id=header["schema_id"])
    offset = start + n
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        size = int(np.prod(shape)) * 8
        chunk = data[offset : offset + size]
        if len(chunk) != size:
            raise CorruptPolicyFile(f"{path}: truncated tensor {spec['name']}")
        net.params[spec["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
        offset += size
    if offset != len(data):
        raise CorruptPolicyFile(f"{path}: {len(data) - offset} trailing bytes")
    expected = PolicyNet(net.obs_len, net.action_dims, net.hidden, rng=np.random.default_rng(0))
    for k, v in expected.params.items():
        if k not in net.params or net.params[k].shape != v.shape:
            raise CorruptPolicyFile(f"{path}: tensor {k} missing or misshapen")
    return net


def config_dict(config: PpoConfig) -> dict:
    d = asdict(config)
    d["hidden"] = list(config.hidden)
    return d
