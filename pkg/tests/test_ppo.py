import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import gae_double_sum
from rigaa.env import make_env
from rigaa.errors import CorruptPolicyFile
from rigaa.ppo import (
    MAGIC,
    PolicyNet,
    PpoConfig,
    ReturnScaler,
    clip_grad_norm,
    compute_gae,
    load_policy,
    policy_bytes,
    ppo_loss_and_grad,
    save_policy,
    train,
)

DIMS = (2, 3, 4)


def micro_batch(net, rng, n=8):
    obs = rng.random((n, net.obs_len))
    actions = np.column_stack([rng.integers(d, size=n) for d in net.action_dims])
    logp = net.evaluate_actions(obs, actions)
    return {
        "obs": obs,
        "actions": actions,
        "old_logp": logp + rng.normal(0, 0.3, n),
        "advantages": rng.normal(size=n),
        "returns": rng.normal(size=n),
    }


def finite_difference_errors(net, batch, config, h=1e-6):
    _, grads, _ = ppo_loss_and_grad(net, batch, config)
    errors = {}
    for name, p in net.params.items():
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up, _, _ = ppo_loss_and_grad(net, batch, config)
            p[idx] = old - h
            down, _, _ = ppo_loss_and_grad(net, batch, config)
            p[idx] = old
            num[idx] = (up - down) / (2 * h)
        denom = max(np.linalg.norm(num) + np.linalg.norm(grads[name]), 1e-8)
        errors[name] = np.linalg.norm(num - grads[name]) / denom
    return errors


def test_gradients_match_finite_differences():
    config = PpoConfig(hidden=(4, 4))
    rng = np.random.default_rng(0)
    net = PolicyNet(5, DIMS, (4, 4), rng=rng)
    for _ in range(3):
        errors = finite_difference_errors(net, micro_batch(net, rng), config)
        assert max(errors.values()) < 1e-4, errors


def test_ratio_one_makes_objectives_equal():
    config = PpoConfig()
    rng = np.random.default_rng(1)
    net = PolicyNet(5, DIMS, (8, 8), rng=rng)
    batch = micro_batch(net, rng)
    batch["old_logp"] = net.evaluate_actions(batch["obs"], batch["actions"])
    _, _, stats = ppo_loss_and_grad(net, batch, config)
    adv = batch["advantages"]
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    assert stats.policy_loss == pytest.approx(-adv.mean(), abs=1e-12)
    assert stats.clip_fraction == 0.0


def test_uniform_head_entropy():
    net = PolicyNet(4, (3,), (4, 4), rng=np.random.default_rng(2))
    for k in list(net.params):
        if k.startswith("pi_"):
            net.params[k][:] = 0.0
    batch = {
        "obs": np.zeros((2, 4)),
        "actions": np.zeros((2, 1), dtype=np.int64),
        "old_logp": np.full(2, -math.log(3)),
        "advantages": np.array([1.0, -1.0]),
        "returns": np.zeros(2),
    }
    _, _, stats = ppo_loss_and_grad(net, batch, PpoConfig())
    assert stats.entropy == pytest.approx(math.log(3))


@given(st.integers(0, 2**32 - 1))
def test_heads_are_normalised(seed):
    rng = np.random.default_rng(seed)
    net = PolicyNet(6, DIMS, (8, 8), rng=rng)
    for head in net.log_probs(rng.random((5, 6)) * 3):
        assert np.allclose(np.exp(head).sum(axis=1), 1.0, atol=1e-9)


def test_gae_single_terminal_step():
    adv, ret = compute_gae([2.0], [0.5], [True], 9.0, 0.99, 0.95)
    assert adv[0] == pytest.approx(1.5)
    assert ret[0] == pytest.approx(2.0)


def test_gae_telescopes_without_discount():
    rng = np.random.default_rng(3)
    r, v = rng.normal(size=10), rng.normal(size=10)
    adv, _ = compute_gae(r, v, np.zeros(10, dtype=bool), 1.7, 1.0, 1.0)
    expected = [r[t:].sum() + 1.7 - v[t] for t in range(10)]
    assert np.allclose(adv, expected, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_gae_matches_double_sum(seed):
    rng = np.random.default_rng(seed)
    n = 50
    r, v = rng.normal(size=n), rng.normal(size=n)
    dones = rng.random(n) < 0.1
    adv, ret = compute_gae(r, v, dones, 0.3, 0.99, 0.95)
    assert np.max(np.abs(adv - gae_double_sum(r, v, dones, 0.3, 0.99, 0.95))) <= 1e-10
    assert np.allclose(ret, adv + v)


def test_grad_norm_clipping():
    grads = {"a": np.array([3.0, 4.0])}
    assert clip_grad_norm(grads, 0.5) == pytest.approx(5.0)
    assert np.linalg.norm(grads["a"]) == pytest.approx(0.5, rel=1e-5)


def test_return_scaler_bounds():
    scaler = ReturnScaler(0.99, 10.0)
    out = [scaler(100.0, i % 40 == 39) for i in range(400)]
    assert np.all(np.abs(out) <= 10.0)
    assert abs(out[-1]) < 100.0


def test_policy_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    net = PolicyNet(120, (2, 7, 37), (8, 8), rng=rng, schema_id="maze-v1")
    path = tmp_path / "p.pol"
    digest = save_policy(net, path)
    assert len(digest) == 64
    back = load_policy(path, schema_id="maze-v1", obs_len=120, action_dims=(2, 7, 37))
    probe = rng.random((100, 120))
    for a, b in zip(net.log_probs(probe), back.log_probs(probe)):
        assert np.max(np.abs(a - b)) == 0.0
    assert policy_bytes(back) == policy_bytes(net)


def test_policy_header_guards(tmp_path):
    net = PolicyNet(120, (2, 7, 37), (8, 8), rng=np.random.default_rng(5), schema_id="maze-v1")
    path = tmp_path / "p.pol"
    save_policy(net, path)
    with pytest.raises(CorruptPolicyFile):
        load_policy(path, obs_len=90)
    with pytest.raises(CorruptPolicyFile):
        load_policy(path, schema_id="road-v1")
    data = path.read_bytes()
    (tmp_path / "short.pol").write_bytes(data[:-8])
    with pytest.raises(CorruptPolicyFile):
        load_policy(tmp_path / "short.pol")
    (tmp_path / "junk.pol").write_bytes(b"hello")
    with pytest.raises(CorruptPolicyFile):
        load_policy(tmp_path / "junk.pol")
    assert data.startswith(MAGIC)


def test_one_update_cycle_and_replay():
    config = PpoConfig(n_steps=128, batch_size=32, epochs=2, total_steps=128, hidden=(16, 16))
    nets = []
    for _ in range(2):
        net, log = train(make_env("road"), config, np.random.default_rng(6))
        assert len(log.rows) == 1 and log.rows[0][0] == 128
        assert all(np.isfinite(float(x)) for x in log.rows[0][2:])
        nets.append(policy_bytes(net))
    assert nets[0] == nets[1]
    header = log.to_csv().splitlines()[0]
    assert header == "step,mean_episode_reward,policy_loss,value_loss,entropy"


def test_config_validation():
    with pytest.raises(ValueError):
        PpoConfig(n_steps=0)
    assert PpoConfig().learning_rate == 3e-4 and PpoConfig().ent_coef == 0.005
