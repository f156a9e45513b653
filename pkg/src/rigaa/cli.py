"""``rigaa`` command line: train, generate, evolve, experiment, report."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import serialize_scenario
from .errors import CorruptPolicyFile, GenerationExhausted, NonFiniteLoss, RigaaError
from .experiments import (
    DESK_RUNS,
    PAPER_RUNS,
    RQ2_RHOS,
    RQ3_ARMS,
    TRAIN_STEPS,
    generate_suite,
    make_domain,
    mean_curve,
    moea_config,
    run_search,
    train_agents,
)
from .env import make_env
from .moea import LOG_FIELDS, ConvergenceLog
from .plots import boxplot_svg, convergence_svg
from .ppo import PpoConfig, config_dict, load_policy, save_policy
from .stats import pairwise_table, table_csv

log = logging.getLogger("rigaa")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3
DEFAULT_OUT = "rigaa_out"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# files and manifests


def _out_dir(args) -> Path:
    path = Path(args.out or os.environ.get("RIGAA_OUT") or DEFAULT_OUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, text: str, outputs: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    outputs.append(str(path))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(out: Path, command: str, config: dict, outputs: list, started: float, policy=None) -> None:
    record = {
        "command": command,
        "version": __version__,
        "config": config,
        "policy_sha256": _digest(policy) if policy else None,
        "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "deterministic": config.get("time_budget") is None,
        "outputs": sorted(os.path.relpath(p, out) for p in outputs),
    }
    (out / "manifest.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _suite_json(scenarios, schema) -> str:
    return json.dumps([serialize_scenario(np.asarray(c), schema) for c in scenarios], indent=1) + "\n"


def _seeds(cfg) -> list[int]:
    if cfg.get("seeds"):
        return [int(s) for s in cfg["seeds"]]
    return [int(cfg.get("seed", 0)) + i for i in range(int(cfg["runs"]))]


def _load_policy_for(problem: str, path):
    if path is None:
        return None
    env = make_env(problem)
    return load_policy(path, schema_id=env.schema.schema_id, obs_len=env.obs_len, action_dims=env.actions.dims)


def _resolve(args, keys) -> dict:
    """Merge a JSON config file (or a manifest's config) with explicit flags."""
    cfg = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        cfg.update(data.get("config", data))
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
        cfg.setdefault(key, None)
    if cfg.get("problem") not in ("maze", "road"):
        raise UsageError("--problem must be maze or road")
    return cfg


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg = _resolve(args, ("problem", "total_steps", "seed", "agents"))
    cfg["total_steps"] = int(cfg["total_steps"] or TRAIN_STEPS[cfg["problem"]])
    cfg["seed"] = int(cfg["seed"] or 0)
    cfg["agents"] = int(cfg["agents"] or 3)
    if cfg["agents"] < 1:
        raise UsageError("--agents must be >= 1")
    ppo = PpoConfig(total_steps=cfg["total_steps"])
    cfg["ppo"] = config_dict(ppo)
    out = _out_dir(args)
    started = time.time()
    seeds = [cfg["seed"] + i for i in range(cfg["agents"])]
    agents, best = train_agents(cfg["problem"], ppo, seeds)
    outputs: list = []
    rows = []
    for i, agent in enumerate(agents):
        save_policy(agent.policy, out / f"agent_{i}.policy")
        outputs.append(str(out / f"agent_{i}.policy"))
        _write(out / f"train_log_agent_{i}.csv", agent.log.to_csv(), outputs)
        rows.append((i, agent.seed, repr(agent.rollout_fitness), repr(agent.rollout_diversity), int(i == best)))
    save_policy(agents[best].policy, out / "policy.bin")
    outputs.append(str(out / "policy.bin"))
    _write(out / "selection.csv", _csv(("agent", "seed", "rollout_f_avs", "rollout_d_av", "selected"), rows), outputs)
    cfg["selected_agent"] = best
    _manifest(out, "train", cfg, outputs, started)
    print(f"selected agent {best} (mean rollout fitness {agents[best].rollout_fitness:.3f}) -> {out / 'policy.bin'}")
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = _resolve(args, ("problem", "generator", "suites", "suite_size", "seed", "policy"))
    cfg["generator"] = cfg["generator"] or "random"
    cfg["suites"] = int(cfg["suites"] or 30)
    cfg["suite_size"] = int(cfg["suite_size"] or 30)
    cfg["seed"] = int(cfg["seed"] or 0)
    if cfg["generator"] == "rl" and not cfg["policy"]:
        raise UsageError("--generator rl needs --policy")
    domain = make_domain(cfg["problem"])
    policy = _load_policy_for(cfg["problem"], cfg["policy"]) if cfg["generator"] == "rl" else None
    out = _out_dir(args)
    started = time.time()
    rng = np.random.default_rng(cfg["seed"])
    outputs: list = []
    metrics, timing = [], []
    for s in range(cfg["suites"]):
        suite = generate_suite(domain, cfg["generator"], cfg["suite_size"], rng, policy)
        for j, c in enumerate(suite.scenarios):
            _write(out / "scenarios" / f"suite_{s:03d}" / f"scenario_{j:03d}.json",
                   json.dumps(serialize_scenario(c, domain.schema)) + "\n", outputs)
        m = suite.metrics(domain.thresholds)
        metrics.append((cfg["generator"], s, repr(m.f_avs), repr(m.d_av), repr(m.best_f1)))
        timing.append((cfg["generator"], s, repr(suite.seconds_per_scenario)))
    _write(out / "metrics.csv", _csv(("generator", "suite", "f_avs", "d_av", "best_f1"), metrics), outputs)
    _write(out / "timing.csv", _csv(("generator", "suite", "seconds_per_scenario"), timing), outputs)
    _manifest(out, "generate", cfg, outputs, started, cfg["policy"] if policy else None)
    print(f"wrote {cfg['suites'] * cfg['suite_size']} scenarios to {out}")
    return EXIT_OK


def cmd_evolve(args) -> int:
    cfg = _resolve(args, ("problem", "algo", "rho", "evals", "time_budget", "seed", "policy", "paper_scale"))
    cfg["algo"] = cfg["algo"] or "nsga2"
    cfg["rho"] = float(cfg["rho"] or 0.0)
    cfg["seed"] = int(cfg["seed"] or 0)
    cfg["paper_scale"] = bool(cfg["paper_scale"])
    if cfg["algo"] == "random" and cfg["rho"]:
        log.warning("--algo random ignores --rho")
        cfg["rho"] = 0.0
    if cfg["rho"] > 0 and not cfg["policy"]:
        raise UsageError("--rho > 0 needs --policy")
    moea = moea_config(cfg["problem"], cfg["algo"], cfg["paper_scale"], eval_budget=cfg["evals"],
                       time_budget=cfg["time_budget"])
    cfg["evals"] = moea.eval_budget
    policy = _load_policy_for(cfg["problem"], cfg["policy"]) if cfg["rho"] > 0 else None
    out = _out_dir(args)
    started = time.time()
    res = run_search(cfg["problem"], moea, cfg["rho"], cfg["seed"], policy)
    domain = make_domain(cfg["problem"])
    outputs: list = []
    run_id = f"{cfg['problem']}-{cfg['algo']}-rho{cfg['rho']}-seed{cfg['seed']}"
    _write(out / "suite.json", _suite_json([s.chromosome for s in res.suite], domain.schema), outputs)
    _write(out / "convergence.csv", res.log.to_csv(run_id, cfg["algo"], cfg["rho"]), outputs)
    m = res.metrics
    _write(out / "metrics.csv", _csv(("run_id", "f_avs", "d_av", "best_f1"),
                                     [(run_id, repr(m.f_avs), repr(m.d_av), repr(m.best_f1))]), outputs)
    _write(out / "timing.csv", _csv(("run_id", "seconds"), [(run_id, repr(res.seconds))]), outputs)
    _manifest(out, "evolve", cfg, outputs, started, cfg["policy"] if policy else None)
    print(f"{run_id}: f_avs={m.f_avs:.3f} d_av={m.d_av:.3f} best={m.best_f1:.3f}")
    return EXIT_OK


def _arms(cfg):
    if cfg["preset"] == "rq2":
        return [(f"rho{r}", "nsga2", r) for r in RQ2_RHOS]
    if cfg["preset"] == "rq3":
        return list(RQ3_ARMS)
    algo = cfg["algo"] or "nsga2"
    return [(f"{algo}-rho{cfg['rho'] or 0.0}", algo, float(cfg["rho"] or 0.0))]


def _experiment_generators(cfg, out, outputs) -> None:
    domain = make_domain(cfg["problem"])
    policy = _load_policy_for(cfg["problem"], cfg["policy"])
    rows, timing = [], []
    for gen in ("random", "rl"):
        rng = np.random.default_rng([cfg["seed"], 0 if gen == "random" else 1])
        for s in range(cfg["suites"]):
            suite = generate_suite(domain, gen, cfg["suite_size"], rng, policy)
            m = suite.metrics(domain.thresholds)
            rows.append((gen, s, repr(m.f_avs), repr(m.d_av), repr(m.best_f1)))
            timing.append((gen, s, repr(suite.seconds_per_scenario)))
    _write(out / "results.csv", _csv(("arm", "suite", "f_avs", "d_av", "best_f1"), rows), outputs)
    _write(out / "timing.csv", _csv(("arm", "suite", "seconds_per_scenario"), timing), outputs)


def cmd_experiment(args) -> int:
    cfg = _resolve(args, ("problem", "preset", "runs", "seeds", "seed", "policy", "evals", "algo", "rho",
                          "paper_scale", "suites", "suite_size"))
    cfg["preset"] = cfg["preset"] or "rq3"
    cfg["paper_scale"] = bool(cfg["paper_scale"])
    cfg["seed"] = int(cfg["seed"] or 0)
    cfg["runs"] = int(cfg["runs"] or (PAPER_RUNS if cfg["paper_scale"] else DESK_RUNS))
    if isinstance(cfg["seeds"], str):
        cfg["seeds"] = [int(s) for s in cfg["seeds"].split(",") if s]
    out = _out_dir(args)
    started = time.time()
    outputs: list = []
    if cfg["preset"] == "rq1s":
        if not cfg["policy"]:
            raise UsageError("preset rq1s needs --policy")
        cfg["suites"] = int(cfg["suites"] or 30)
        cfg["suite_size"] = int(cfg["suite_size"] or 30)
        _experiment_generators(cfg, out, outputs)
        failed = 0
    else:
        seeds = _seeds(cfg)
        cfg["seeds"] = seeds
        arms = _arms(cfg)
        if any(rho > 0 for _, _, rho in arms) and not cfg["policy"]:
            raise UsageError(f"preset {cfg['preset']} needs --policy")
        policy = _load_policy_for(cfg["problem"], cfg["policy"]) if cfg["policy"] else None
        domain = make_domain(cfg["problem"])
        rows, conv, timing = [], [], []
        failed = 0
        for name, algo, rho in arms:
            moea = moea_config(cfg["problem"], algo, cfg["paper_scale"], eval_budget=cfg["evals"])
            for seed in seeds:
                run_id = f"{name}-seed{seed}"
                try:
                    res = run_search(cfg["problem"], moea, rho, seed, policy)
                except (GenerationExhausted, RigaaError) as exc:
                    log.error("run %s failed: %s", run_id, exc)
                    failed += 1
                    continue
                m = res.metrics
                rows.append((name, seed, repr(m.f_avs), repr(m.d_av), repr(m.best_f1)))
                conv.extend(res.log.rows(run_id, name, rho))
                timing.append((name, seed, repr(res.seconds)))
                _write(out / "runs" / run_id / "suite.json",
                       _suite_json([s.chromosome for s in res.suite], domain.schema), outputs)
        _write(out / "results.csv", _csv(("arm", "seed", "f_avs", "d_av", "best_f1"), rows), outputs)
        _write(out / "convergence.csv", _csv(LOG_FIELDS, conv), outputs)
        _write(out / "timing.csv", _csv(("arm", "seed", "seconds"), timing), outputs)
        total = len(arms) * len(seeds)
        if failed:
            _write(out / "failures.txt", f"{failed} of {total} runs failed\n", outputs)
        if failed > 0.2 * total:
            _manifest(out, "experiment", cfg, outputs, started, cfg["policy"])
            return EXIT_PARTIAL
    report(out, outputs)
    _manifest(out, "experiment", cfg, outputs, started, cfg["policy"])
    print(f"experiment {cfg['preset']} written to {out}")
    return EXIT_OK


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def report(out: Path, outputs: list | None = None) -> None:
    """Rebuild stats tables and plots from ``results.csv`` (and ``convergence.csv``)."""
    outputs = [] if outputs is None else outputs
    rows = _read_csv(out / "results.csv")
    arms: dict = {}
    for r in rows:
        arms.setdefault(r["arm"], {"f_avs": [], "d_av": []})
        arms[r["arm"]]["f_avs"].append(float(r["f_avs"]))
        arms[r["arm"]]["d_av"].append(float(r["d_av"]))
    stats_rows = []
    for metric in ("f_avs", "d_av"):
        samples = {a: v[metric] for a, v in arms.items() if len(v[metric]) >= 3}
        stats_rows += pairwise_table(samples, metric)
        _write(out / f"{metric}.svg", boxplot_svg({a: v[metric] for a, v in arms.items()}, metric), outputs)
    _write(out / "stats.csv", table_csv(stats_rows), outputs)
    conv_path = out / "convergence.csv"
    if conv_path.exists():
        logs: dict = {}
        for r in _read_csv(conv_path):
            lg = logs.setdefault(r["algo"], {}).setdefault(r["run_id"], ConvergenceLog())
            lg.evaluations.append(int(r["evaluations"]))
            lg.best_f1.append(float(r["best_f1"]))
            lg.mean_f1.append(float(r["mean_f1"]))
            lg.suite_diversity.append(float(r["suite_diversity"]))
        curves = {arm: mean_curve(list(runs.values())) for arm, runs in logs.items() if runs}
        if curves:
            _write(out / "convergence.svg", convergence_svg(curves, "best f1"), outputs)


def cmd_report(args) -> int:
    src = Path(args.input or args.out or os.environ.get("RIGAA_OUT") or DEFAULT_OUT)
    if not (src / "results.csv").exists():
        raise UsageError(f"{src} has no results.csv")
    report(src)
    print(f"report regenerated in {src}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rigaa", description=__doc__)
    parser.add_argument("--version", action="version", version=f"rigaa {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, problem=True):
        if problem:
            p.add_argument("--problem", choices=("maze", "road"))
        p.add_argument("--config", help="JSON config file or a run manifest to replay")
        p.add_argument("--out", help="output directory (default: $RIGAA_OUT or ./rigaa_out)")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train generator policies and keep the fittest")
    common(p)
    p.add_argument("--total-steps", dest="total_steps", type=int)
    p.add_argument("--agents", type=int, help="number of agents to train (default 3)")
    p.set_defaults(func=cmd_train, parser=p)

    p = sub.add_parser("generate", help="generate scenario suites with the rl or random generator")
    common(p)
    p.add_argument("--generator", choices=("rl", "random"))
    p.add_argument("--suites", type=int)
    p.add_argument("--suite-size", dest="suite_size", type=int)
    p.add_argument("--policy")
    p.set_defaults(func=cmd_generate, parser=p)

    p = sub.add_parser("evolve", help="run one search")
    common(p)
    p.add_argument("--algo", choices=("nsga2", "smsemoa", "random"))
    p.add_argument("--rho", type=float)
    p.add_argument("--evals", type=int)
    p.add_argument("--time-budget", dest="time_budget", type=float, help="seconds; makes the run non-deterministic")
    p.add_argument("--policy")
    p.add_argument("--paper-scale", dest="paper_scale", action="store_true", default=None)
    p.set_defaults(func=cmd_evolve, parser=p)

    p = sub.add_parser("experiment", help="run a preset experiment over many seeds")
    common(p)
    p.add_argument("--preset", choices=("rq1s", "rq2", "rq3", "custom"))
    p.add_argument("--runs", type=int)
    p.add_argument("--seeds", help="comma-separated seeds (overrides --seed/--runs)")
    p.add_argument("--policy")
    p.add_argument("--evals", type=int)
    p.add_argument("--algo", choices=("nsga2", "smsemoa", "random"))
    p.add_argument("--rho", type=float)
    p.add_argument("--suites", type=int)
    p.add_argument("--suite-size", dest="suite_size", type=int)
    p.add_argument("--paper-scale", dest="paper_scale", action="store_true", default=None)
    p.set_defaults(func=cmd_experiment, parser=p)

    p = sub.add_parser("report", help="rebuild stats and plots from an experiment directory")
    p.add_argument("input", nargs="?")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report, parser=p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        getattr(args, "parser", parser).print_usage(sys.stderr)
        print(f"rigaa: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteLoss, CorruptPolicyFile, GenerationExhausted, RigaaError) as exc:
        print(f"rigaa: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as exc:
        print(f"rigaa: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
