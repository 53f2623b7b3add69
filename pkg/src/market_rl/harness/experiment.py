"""Training, evaluation, replication and comparison runs on disk."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from functools import partial
from pathlib import Path

import numpy as np

from ..env import ConfigError, EnvConfig, MarketEnv, trace_row, TRACE_COLUMNS
from ..rl.common import make_rng
from ..rl.policies import GREEDY, FixedPolicy, RandomPolicy, act, load_checkpoint, save_checkpoint
from ..stats import SampleSummary, one_sample_t_test, quartiles, welch_t_test
from .config import ALGORITHMS, ExperimentConfig

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
REPORT_VERSION = 1
SEED_SCHEME = "numpy SeedSequence(entropy=master_seed, spawn_key=key) feeding Philox generators"

# first spawn-key component per stream
SEED_STREAMS = {"ppo": 0, "dqn": 1, "a2c": 2, "random": 3, "eval": 4}


def derive_seed(master: int, stream: str, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master), spawn_key=(SEED_STREAMS[stream], int(index)))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False))
        fh.write("\n")


def _make_env(env_cfg: EnvConfig, randomization=None):
    return MarketEnv(env_cfg, randomization)


# -- training ----------------------------------------------------------------

def run_training(cfg: ExperimentConfig, out_dir, seed, label: str | None = None) -> dict:
    """Train ``cfg.algorithm`` and write metrics.csv, periodic and final checkpoints."""
    out = Path(out_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    label = label or cfg.algorithm
    seed_seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    seed_info = {"entropy": int(seed_seq.entropy), "spawn_key": list(seed_seq.spawn_key)}
    echo = {"experiment": cfg.to_dict(), "label": label, "seed": seed_info}

    def checkpoint(i, policy, optimizer):
        if (i + 1) % cfg.train.checkpoint_every == 0:
            save_checkpoint(out / "checkpoints" / f"update_{i + 1:05d}.json", policy, cfg.algorithm,
                            echo, optimizer)

    train_fn = ALGORITHMS[cfg.algorithm][1]
    result = train_fn(partial(_make_env, cfg.env, cfg.randomization), cfg.train.total_steps, cfg.algo,
                      seed=seed_seq, n_envs=cfg.train.n_envs, metrics_path=out / "metrics.csv",
                      on_update=checkpoint)
    final = out / "final.json"
    save_checkpoint(final, result.policy, cfg.algorithm, echo, result.optimizer,
                    extra={"env_steps": result.env_steps})
    log.info("%s: trained %d steps -> %s", label, result.env_steps, final)
    return {"label": label, "checkpoint": str(final), "metrics": str(out / "metrics.csv"),
            "env_steps": result.env_steps}


# -- evaluation ----------------------------------------------------------------

def parse_baseline(spec: str, params) -> tuple:
    """``fixed:K`` or ``random`` -> (policy, group)."""
    if spec == "random":
        return RandomPolicy(params.q_min, params.q_max), "random"
    if spec.startswith("fixed:"):
        try:
            k = int(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad baseline spec {spec!r}") from None
        if not params.q_min <= k <= params.q_max:
            raise ConfigError(f"fixed quantity {k} outside [{params.q_min}, {params.q_max}]")
        return FixedPolicy(k), "fixed"
    raise ConfigError(f"unknown baseline {spec!r}; use fixed:K or random")


def episode_seed(eval_seed: int, episode: int) -> int:
    return int(np.random.SeedSequence(entropy=int(eval_seed), spawn_key=(episode,)).generate_state(1)[0])


def evaluate(policy, env_cfg: EnvConfig, horizon: int, episodes: int, eval_seed: int,
             actor_seed=None, randomization=None):
    """Greedy roll-outs; every agent sees the same per-episode market seeds.

    Returns ``(episode_profits, trace_rows)``.
    """
    actor_rng = make_rng(actor_seed if actor_seed is not None else eval_seed)
    profits, rows = [], []
    if horizon == 0:
        return [0.0] * episodes, rows
    env_cfg = replace(env_cfg, horizon=horizon)
    for ep in range(episodes):
        env = MarketEnv(env_cfg, randomization)
        obs = env.reset(episode_seed(eval_seed, ep))
        total = 0.0
        for _ in range(horizon):
            res = env.step(act(policy, obs, actor_rng, GREEDY))
            obs = res.observation
            total += res.reward
            row = trace_row(res)
            row["episode"] = ep
            rows.append(row)
        profits.append(total)
    return profits, rows


def write_report(out_dir, label: str, group: str, source: str, profits, rows, *, seed, horizon,
                 episodes) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_name = f"{label}_trace.csv"
    with open(out / trace_name, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("episode",) + TRACE_COLUMNS)
        for r in rows:
            writer.writerow([r["episode"]] + [repr(float(r[c])) if isinstance(r[c], float) else r[c]
                                              for c in TRACE_COLUMNS])
    summary = SampleSummary.of(profits).to_dict()
    report = {
        "format_version": REPORT_VERSION,
        "label": label,
        "group": group,
        "source": source,
        "seed": seed,
        "horizon": horizon,
        "episodes": episodes,
        "episode_profits": [float(p) for p in profits],
        "mean_profit": summary["mean"],
        "summary": summary,
        "trace": trace_name,
    }
    write_json(out / f"{label}.json", report)
    return report


def run_eval(source: str, env_cfg: EnvConfig, horizon: int, episodes: int, eval_seed: int, out_dir,
             label: str | None = None, actor_seed=None, randomization=None) -> dict:
    """Evaluate a checkpoint path or a baseline spec and write its report."""
    if source.startswith("fixed:") or source == "random":
        policy, group = parse_baseline(source, env_cfg.params)
        label = label or source.replace(":", "_")
    else:
        policy, doc = load_checkpoint(source)
        group = doc.get("algorithm", "drl")
        label = label or doc.get("config", {}).get("label") or Path(source).stem
        # relative, so reports do not depend on where the experiment lives
        source = os.path.relpath(source, out_dir)
    profits, rows = evaluate(policy, env_cfg, horizon, episodes, eval_seed, actor_seed, randomization)
    return write_report(out_dir, label, group, source, profits, rows, seed=int(eval_seed),
                        horizon=horizon, episodes=episodes)


def baseline_specs(params, fixed_units=None, random_agents=5) -> list:
    units = range(params.q_min, params.q_max + 1) if fixed_units is None else fixed_units
    specs = [(f"fixed:{k}", f"fixed_{k}", None) for k in units]
    specs += [("random", f"random_{i}", i) for i in range(random_agents)]
    return specs


def run_baselines(cfg: ExperimentConfig, out_dir, master_seed: int) -> list:
    reports = []
    for spec, label, idx in baseline_specs(cfg.env.params, cfg.replicate.fixed_units,
                                           cfg.replicate.random_agents):
        actor = derive_seed(master_seed, "random", idx) if idx is not None else None
        reports.append(run_eval(spec, cfg.env, cfg.eval.horizon, cfg.eval.episodes, cfg.eval.seed,
                                out_dir, label=label, actor_seed=actor, randomization=cfg.randomization))
    return reports


# -- comparison ----------------------------------------------------------------

def load_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        report = json.load(fh)
    report["_dir"] = str(Path(path).parent)
    return report


def _samples(reports, unit):
    if unit == "agent":
        return [r["mean_profit"] for r in reports]
    if unit == "episode":
        return [p for r in reports for p in r["episode_profits"]]
    raise ConfigError(f"unknown sampling unit {unit!r}")


def _mean_cumulative(report) -> list:
    """Per-step cumulative profit averaged over the report's episodes."""
    if "_dir" not in report or not report.get("trace"):
        return []
    by_ep: dict = {}
    with open(Path(report["_dir"]) / report["trace"], newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            by_ep.setdefault(row["episode"], []).append(float(row["reward"]))
    if not by_ep:
        return []
    curves = np.array([np.cumsum(v) for v in by_ep.values()])
    return curves.mean(axis=0).tolist()


def compare(reports, out_dir=None, groups=None, drl_group="ppo", random_group="random",
            default_group="fixed", mu0=0.0, alpha=0.001, unit="agent") -> dict:
    """Group summaries plus one-sided tests: DRL vs random, DRL vs fixed, DRL vs ``mu0``.

    ``groups`` maps a group name to report labels; by default reports are
    grouped by their ``group`` field. With a single group only the
    one-sample test runs.
    """
    if groups is None:
        groups = {}
        for r in reports:
            groups.setdefault(r["group"], []).append(r["label"])
    by_label = {r["label"]: r for r in reports}
    missing = [l for labels in groups.values() for l in labels if l not in by_label]
    if missing:
        raise ConfigError(f"grouping names unknown reports: {missing}")
    members = {g: [by_label[l] for l in labels] for g, labels in groups.items()}
    samples = {g: _samples(rs, unit) for g, rs in members.items()}
    summaries = {g: SampleSummary.of(s) for g, s in samples.items() if s}

    if len(summaries) == 1:
        drl_group = next(iter(summaries))
    if drl_group not in summaries:
        raise ConfigError(f"DRL group {drl_group!r} not among {sorted(summaries)}")
    tests = {}
    drl = summaries[drl_group]
    if drl.n >= 2:
        tests["drl_vs_zero"] = {"kind": "one_sample", "mu0": mu0,
                                **one_sample_t_test(drl, mu0).to_dict()}
    for name, other in (("drl_vs_random", random_group), ("drl_vs_default", default_group)):
        if other in summaries and other != drl_group and drl.n >= 2 and summaries[other].n >= 2:
            tests[name] = {"kind": "welch", "against": other,
                           **welch_t_test(drl, summaries[other]).to_dict()}
    for t in tests.values():
        t["reject_h0"] = t["p_value"] < alpha
    result = {
        "format_version": REPORT_VERSION,
        "alpha": alpha,
        "unit": unit,
        "drl_group": drl_group,
        "groups": {g: {"labels": groups[g], "samples": samples[g], **summaries[g].to_dict(),
                       "quartiles": quartiles(samples[g])} for g in summaries},
        "tests": tests,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "comparison.json", result)
        with open(out / "bars.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("group", "n", "mean", "std"))
            for g, s in summaries.items():
                w.writerow((g, s.n, repr(s.mean), repr(s.std)))
        with open(out / "distribution.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("group", "min", "q1", "median", "q3", "max"))
            for g in summaries:
                q = quartiles(samples[g])
                w.writerow((g,) + tuple(repr(q[k]) for k in ("min", "q1", "median", "q3", "max")))
        with open(out / "cumulative.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("label", "group", "t", "cumulative_profit"))
            for g, rs in members.items():
                for r in rs:
                    for t, v in enumerate(_mean_cumulative(r)):
                        w.writerow((r["label"], g, t, repr(v)))
    return result


# -- replication ----------------------------------------------------------------

def roster(cfg: ExperimentConfig) -> list:
    """Planned training runs as ``(label, algorithm, seed_index)``."""
    runs = [(f"ppo_s{s}", "ppo", s) for s in cfg.replicate.ppo_seeds]
    runs += [(f"dqn_s{s}", "dqn", s) for s in cfg.replicate.dqn_seeds]
    runs += [(f"a2c_s{s}", "a2c", s) for s in cfg.replicate.a2c_seeds]
    return runs


def _run_config(cfg: ExperimentConfig, algorithm: str) -> ExperimentConfig:
    if algorithm == cfg.algorithm:
        return cfg
    return cfg.with_algorithm(algorithm)


def _train_job(args):
    cfg, algorithm, out_dir, master, index, label = args
    return run_training(_run_config(cfg, algorithm), out_dir, derive_seed(master, algorithm, index), label)


def replicate(cfg: ExperimentConfig, out_dir, master_seed: int, dry_run: bool = False) -> dict:
    """Train the DRL roster, evaluate it with the baselines, compare, and write
    a manifest listing every file with its SHA-256."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", cfg.to_dict())
    runs = roster(cfg)
    baselines = baseline_specs(cfg.env.params, cfg.replicate.fixed_units, cfg.replicate.random_agents)
    manifest = {
        "format_version": MANIFEST_VERSION,
        "master_seed": int(master_seed),
        "seed_scheme": SEED_SCHEME,
        "seed_streams": SEED_STREAMS,
        "total_steps": cfg.train.total_steps,
        "dry_run": dry_run,
        "runs": [{"label": l, "algorithm": a, "spawn_key": [SEED_STREAMS[a], i]} for l, a, i in runs],
        "baselines": [{"label": label, "spec": spec} for spec, label, _ in baselines],
        "planned_reports": [f"eval/{l}.json" for l, _, _ in runs] + [f"eval/{label}.json" for _, label, _ in baselines],
        "eval_reports": [],
    }
    if not dry_run:
        jobs = [(cfg, a, out / "train" / l, master_seed, i, l) for l, a, i in runs]
        if cfg.replicate.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=cfg.replicate.jobs) as pool:
                trained = list(pool.map(_train_job, jobs))
        else:
            trained = [_train_job(j) for j in jobs]
        eval_dir = out / "eval"
        reports = [run_eval(t["checkpoint"], cfg.env, cfg.eval.horizon, cfg.eval.episodes, cfg.eval.seed,
                            eval_dir, label=t["label"], randomization=cfg.randomization) for t in trained]
        reports += run_baselines(cfg, eval_dir, master_seed)
        manifest["eval_reports"] = [f"eval/{r['label']}.json" for r in reports]
        for r in reports:
            r["_dir"] = str(eval_dir)
        compare(reports, out / "comparison", drl_group="ppo")
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest["files"] = [{"path": p.relative_to(out).as_posix(), "sha256": sha256_file(p),
                          "bytes": p.stat().st_size} for p in files]
    write_json(out / "manifest.json", manifest)
    return manifest


def output_root(default: str) -> str:
    return os.environ.get("MARKET_RL_OUTPUT_ROOT", default)
