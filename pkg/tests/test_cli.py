import csv
import json

import numpy as np
import pytest

from rigaa.cli import main
from rigaa.env import make_env
from rigaa.ppo import PolicyNet, save_policy


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def road_policy(tmp_path):
    env = make_env("road")
    net = PolicyNet(env.obs_len, env.actions.dims, (8, 8), rng=np.random.default_rng(0), schema_id="road-v1")
    path = tmp_path / "road.pol"
    save_policy(net, path)
    return path


def test_missing_problem_is_a_usage_error(capsys):
    assert main(["evolve", "--evals", "10"]) == 1
    assert "usage: rigaa evolve" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_evolve_replays_byte_identically(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["evolve", "--problem", "maze", "--evals", "250", "--seed", "3", "--out", str(a)]) == 0
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["deterministic"] and manifest["config"]["seed"] == 3
    assert main(["evolve", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    for name in ("suite.json", "convergence.csv", "metrics.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    best = [float(r["best_f1"]) for r in rows(a / "convergence.csv")]
    assert best == sorted(best)


def test_random_algo_ignores_rho(tmp_path, caplog):
    out = tmp_path / "r"
    assert main(["evolve", "--problem", "road", "--algo", "random", "--rho", "0.4", "--evals", "60",
                 "--out", str(out)]) == 0
    assert "ignores --rho" in caplog.text
    assert json.loads((out / "manifest.json").read_text())["config"]["rho"] == 0.0


def test_generate_cardinality_and_columns(tmp_path, monkeypatch):
    monkeypatch.setenv("RIGAA_OUT", str(tmp_path / "env_out"))
    assert main(["generate", "--problem", "road", "--generator", "random", "--suites", "2", "--suite-size", "3"]) == 0
    out = tmp_path / "env_out"
    assert len(list((out / "scenarios").rglob("*.json"))) == 6
    assert list(rows(out / "metrics.csv")[0]) == ["generator", "suite", "f_avs", "d_av", "best_f1"]
    assert list(rows(out / "timing.csv")[0]) == ["generator", "suite", "seconds_per_scenario"]


def test_generate_rl_with_wrong_policy_is_a_runtime_error(tmp_path, road_policy):
    code = main(["generate", "--problem", "maze", "--generator", "rl", "--policy", str(road_policy),
                 "--suites", "1", "--suite-size", "2", "--out", str(tmp_path / "g")])
    assert code == 2


def test_train_single_agent(tmp_path):
    out = tmp_path / "t"
    assert main(["train", "--problem", "road", "--agents", "1", "--total-steps", "256", "--out", str(out)]) == 0
    sel = rows(out / "selection.csv")
    assert len(sel) == 1 and sel[0]["selected"] == "1"
    assert (out / "policy.bin").exists()
    assert json.loads((out / "manifest.json").read_text())["config"]["agents"] == 1


def test_experiment_rq3_artifacts_and_rerun(tmp_path, road_policy):
    args = ["experiment", "--problem", "road", "--preset", "rq3", "--runs", "3", "--evals", "200",
            "--policy", str(road_policy)]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    for name in ("results.csv", "convergence.csv", "stats.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    arms = {r["arm"] for r in rows(a / "results.csv")}
    assert arms == {"random", "nsga2", "rigaa", "smsemoa", "srigaa"}
    assert len(rows(a / "stats.csv")) == 2 * 10
    for svg in ("f_avs.svg", "d_av.svg", "convergence.svg"):
        assert (a / svg).read_text().startswith("<svg")
    # plots and stats are pure functions of the CSVs
    stats = (a / "stats.csv").read_bytes()
    (a / "stats.csv").unlink()
    assert main(["report", str(a)]) == 0
    assert (a / "stats.csv").read_bytes() == stats


def test_rq2_needs_a_policy(tmp_path):
    assert main(["experiment", "--problem", "maze", "--preset", "rq2", "--runs", "1", "--out", str(tmp_path)]) == 1
