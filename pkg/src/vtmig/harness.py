"""Experiment orchestration and metric files.

Metrics are long-format CSV with columns ``run_id, algorithm, seed, episode,
step, metric, value``; ``step`` is empty for episode aggregates. Floats are
written with ``repr`` so a rerun with the same inputs is byte-identical. One
file per (run, algorithm) lives in the output directory.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from .env import Env
from .learner import MADDPG, MADQN, GeneticSearch, MultiObjectiveMADDPG, RandomPolicy, train

log = logging.getLogger(__name__)

ALGORITHMS = ("mo-maddpg", "maddpg", "madqn", "ga", "random")
COLUMNS = ("run_id", "algorithm", "seed", "episode", "step", "metric", "value")
SUMMARY_FIELDS = ("reward", "critic_loss", "latency", "energy", "cost", "ux", "migration_success_rate")


def make_agent(name: str, cfg: ExperimentConfig, seed: int, env: Env):
    if name == "mo-maddpg":
        return MultiObjectiveMADDPG(cfg, seed)
    if name == "maddpg":
        return MADDPG(cfg, seed)
    if name == "madqn":
        return MADQN(cfg, seed)
    if name == "random":
        return RandomPolicy(env, seed)
    raise ValueError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


class MetricsWriter:
    """Append-only CSV sink for one (run, algorithm) pair."""

    def __init__(self, path: str, run_id: str, algorithm: str):
        self.path, self.run_id, self.algorithm = path, run_id, algorithm
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(COLUMNS)

    def write(self, seed: int, episode: int, metrics: dict, step: Optional[int] = None) -> None:
        for name in sorted(metrics):
            self._w.writerow([self.run_id, self.algorithm, seed, episode, "" if step is None else step,
                              name, _fmt(float(metrics[name]))])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class RunSummary:
    run_id: str
    algorithm: str
    seeds: list
    episodes: int
    final_window: int
    aggregates: dict = field(default_factory=dict)  # metric -> mean over seeds of final-window means
    per_seed_final_reward: dict = field(default_factory=dict)
    config_hash: str = ""
    wall_clock_s: float = 0.0


def _final_window_aggregates(episodes: dict[int, dict[int, dict]], window: int):
    """episodes: seed -> episode -> metrics. Mean over the last ``window`` episodes, then over seeds."""
    per_seed: dict[int, dict[str, float]] = {}
    for seed, eps in sorted(episodes.items()):
        keys = sorted(eps)
        tail = keys[-window:] if window > 0 else keys
        out = {}
        for m in SUMMARY_FIELDS:
            vals = [eps[k][m] for k in tail if m in eps[k]]
            if vals:
                out[m] = sum(vals) / len(vals)
        per_seed[seed] = out
    agg = {}
    for m in SUMMARY_FIELDS:
        vals = [s[m] for s in per_seed.values() if m in s]
        if vals:
            agg[m] = sum(vals) / len(vals)
    return agg, {s: v.get("reward") for s, v in per_seed.items()}


def sweep_points(cfg: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """(run-id suffix, config) per grid point; a single unsuffixed point without sweeps."""
    sweeps = cfg.harness.sweeps
    if not sweeps:
        return [("", cfg)]
    out = []
    for axis in sorted(sweeps):
        for value in sweeps[axis]:
            if axis == "task_size_mb":
                lo, hi = value
                label = f"{float(lo):g}-{float(hi):g}"
                point = cfg.replace(**{"world.task_size_mb": [float(lo), float(hi)], "harness.sweeps": {}})
            else:
                label = f"{float(value):g}"
                point = cfg.replace(**{f"world.{axis}": float(value), "harness.sweeps": {}})
            out.append((f"__{axis}={label}", point))
    return out


def _save_checkpoint(agent, cfg: ExperimentConfig, path: str) -> None:
    state = dict(agent.state_dict())
    state["__config_digest__"] = np.array(cfg.digest())
    state["__algorithm__"] = np.array(agent.name)
    np.savez(path, **state)


def load_checkpoint(agent, cfg: ExperimentConfig, path: str, strict: bool = True) -> None:
    with np.load(path) as data:
        digest = str(data["__config_digest__"])
        if strict and digest != cfg.digest():
            raise ValueError(f"checkpoint was trained with config {digest}, not {cfg.digest()}")
        agent.load_state_dict({k: data[k] for k in data.files if not k.startswith("__")})


def _run_one(name: str, cfg: ExperimentConfig, seed: int, writer: MetricsWriter,
             checkpoint_dir: Optional[str], tag: str, embeddings: Optional[csv.writer]) -> dict:
    env = Env(cfg)
    log_steps = cfg.harness.log_steps
    history: dict[int, dict] = {}

    def on_episode(ep, summary, steps):
        history[ep] = summary
        writer.write(seed, ep, summary)
        for k, m in enumerate(steps):
            writer.write(seed, ep, m, step=k)

    if name == "ga":
        GeneticSearch(cfg, seed).run(env, on_generation=on_episode)
        return history
    agent = make_agent(name, cfg, seed, env)
    if embeddings is not None and hasattr(agent, "encoder"):
        _wrap_for_embeddings(agent, embeddings, seed, env)
    train(agent, env, cfg.learner.episodes, seed, on_episode=on_episode, log_steps=log_steps)
    if checkpoint_dir and hasattr(agent, "state_dict"):
        os.makedirs(checkpoint_dir, exist_ok=True)
        _save_checkpoint(agent, cfg, os.path.join(checkpoint_dir, f"{tag}__seed{seed}.npz"))
    return history


def _wrap_for_embeddings(agent, sink, seed: int, env: Env) -> None:
    """Record every node embedding the acting policy computes."""
    act = agent.act
    counter = {"episode": -1}

    def act_and_dump(obs, explore=True):
        if env.t == 0:
            counter["episode"] += 1
        Z, _ = agent.encoder.encode(obs.node_features[None], obs.coverage[None])
        for node, row in enumerate(Z[0]):
            sink.writerow([seed, counter["episode"], env.t, node, *[_fmt(float(v)) for v in row]])
        return act(obs, explore)

    agent.act = act_and_dump


def run_experiment(cfg: ExperimentConfig, algorithms: Sequence[str], seeds: Sequence[int],
                   out_dir: str, run_id: str = "run", checkpoint: bool = False,
                   dump_embeddings: bool = False) -> list[RunSummary]:
    """Run every (grid point, algorithm, seed) and write metrics plus summaries."""
    if not algorithms:
        raise ValueError("need at least one algorithm")
    if not seeds:
        raise ValueError("need at least one seed")
    for a in algorithms:
        if a not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {a!r}; choose from {', '.join(ALGORITHMS)}")
    os.makedirs(out_dir, exist_ok=True)
    summaries = []
    for suffix, point in sweep_points(cfg):
        rid = run_id + suffix
        with open(os.path.join(out_dir, f"{rid}.config.json"), "w", encoding="utf-8") as fh:
            json.dump(point.to_dict(), fh, indent=2, sort_keys=True)
        for algo in algorithms:
            start = time.perf_counter()
            path = os.path.join(out_dir, f"{rid}__{algo}.csv")
            emb_fh = open(os.path.join(out_dir, f"{rid}__{algo}.embeddings.csv"), "w", newline="",
                          encoding="utf-8") if dump_embeddings else None
            emb = None
            if emb_fh is not None:
                emb = csv.writer(emb_fh, lineterminator="\n")
                emb.writerow(["seed", "episode", "step", "node"] + [f"z{k}" for k in range(point.learner.gcn_out)])
            per_seed = {}
            try:
                with MetricsWriter(path, rid, algo) as writer:
                    for seed in seeds:
                        log.info("run %s algorithm %s seed %d", rid, algo, seed)
                        per_seed[seed] = _run_one(algo, point, seed, writer,
                                                  os.path.join(out_dir, "checkpoints") if checkpoint else None,
                                                  f"{rid}__{algo}", emb)
            finally:
                if emb_fh is not None:
                    emb_fh.close()
            agg, finals = _final_window_aggregates(per_seed, point.harness.final_window)
            n_eps = len(next(iter(per_seed.values())))
            summary = RunSummary(rid, algo, list(seeds), n_eps, point.harness.final_window, agg, finals,
                                 point.digest(), time.perf_counter() - start)
            with open(os.path.join(out_dir, f"{rid}__{algo}.summary.json"), "w", encoding="utf-8") as fh:
                json.dump(asdict(summary), fh, indent=2, sort_keys=True)
            summaries.append(summary)
    return summaries


# -- reading back --------------------------------------------------------------

def read_metrics(metrics_dir: str) -> list[dict]:
    """All records from every metrics file in ``metrics_dir``."""
    rows = []
    files = sorted(f for f in os.listdir(metrics_dir)
                   if f.endswith(".csv") and "__" in f and not f.endswith(".embeddings.csv"))
    for name in files:
        with open(os.path.join(metrics_dir, name), newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != COLUMNS:
                continue
            for r in reader:
                r["seed"] = int(r["seed"])
                r["episode"] = int(r["episode"])
                r["step"] = int(r["step"]) if r["step"] != "" else None
                r["value"] = float(r["value"])
                rows.append(r)
    return rows


def _episode_table(rows: Iterable[dict]) -> dict:
    """(run_id, algorithm) -> seed -> episode -> metric -> value (episode records only)."""
    table: dict = defaultdict(lambda: defaultdict(lambda: defaultdict(dict)))
    for r in rows:
        if r["step"] is None:
            table[(r["run_id"], r["algorithm"])][r["seed"]][r["episode"]][r["metric"]] = r["value"]
    return table


def summarize(metrics_dir: str, final_window: int = 50, out_path: Optional[str] = None):
    """Per-(run, algorithm) aggregates plus percentage deltas against every other algorithm."""
    rows = read_metrics(metrics_dir)
    if not rows:
        raise ValueError(f"no metrics found in {metrics_dir}")
    table = _episode_table(rows)
    summaries = []
    for (rid, algo), per_seed in sorted(table.items()):
        agg, finals = _final_window_aggregates(per_seed, final_window)
        n_eps = max(len(v) for v in per_seed.values())
        summaries.append(RunSummary(rid, algo, sorted(per_seed), n_eps, final_window, agg, finals))
    by_run = defaultdict(list)
    for s in summaries:
        by_run[s.run_id].append(s)
    header = ["run_id", "algorithm", "n_seeds", "episodes", *SUMMARY_FIELDS]
    algos = sorted({s.algorithm for s in summaries})
    multi = len(algos) > 1
    if multi:
        header += [f"reward_delta_pct_vs_{a}" for a in algos]
    lines = []
    for rid in sorted(by_run):
        group = {s.algorithm: s for s in by_run[rid]}
        for algo in sorted(group):
            s = group[algo]
            row = [rid, algo, len(s.seeds), s.episodes] + [_fmt(s.aggregates[m]) if m in s.aggregates else "" for m in SUMMARY_FIELDS]
            if multi:
                for other in algos:
                    if other == algo or other not in group:
                        row.append("")
                    else:
                        row.append(_fmt(percent_delta(s.aggregates.get("reward", math.nan),
                                                      group[other].aggregates.get("reward", math.nan))))
            lines.append(row)
    out_path = out_path or os.path.join(metrics_dir, "summary_table.csv")
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(lines)
    return summaries, out_path


def percent_delta(value: float, baseline: float) -> float:
    """Relative improvement of ``value`` over ``baseline`` in percent of |baseline|."""
    if baseline == 0:
        return 0.0 if value == 0 else math.copysign(math.inf, value)
    return (value - baseline) / abs(baseline) * 100.0


# -- plot data -----------------------------------------------------------------

EPISODE_SERIES = {
    "reward_vs_episode.csv": "reward",
    "loss_vs_episode.csv": "critic_loss",
    "energy_vs_episode.csv": "energy",
    "qoe_vs_episode.csv": "ux",
    "latency_vs_episode.csv": "latency",
    "migration_success_vs_episode.csv": "migration_success_rate",
    "migration_cost_vs_episode.csv": "cost",
}
SWEEP_SERIES = {
    "task_size_mb": {"energy_vs_task_size.csv": ("energy", "energy_vehicle", "energy_edge", "energy_cloud"),
                     "latency_vs_task_size.csv": ("latency",)},
    "resource_level": {"qoe_vs_resource.csv": ("ux",), "latency_vs_resource.csv": ("latency",),
                       "migration_cost_vs_resource.csv": ("cost",)},
    "task_prob": {"latency_vs_demand.csv": ("latency",), "migration_success_vs_demand.csv": ("migration_success_rate",)},
}


def _parse_sweep(run_id: str):
    if "__" not in run_id:
        return None
    base, tail = run_id.rsplit("__", 1)
    if "=" not in tail:
        return None
    axis, label = tail.split("=", 1)
    if "-" in label and axis == "task_size_mb":
        lo, hi = (float(x) for x in label.split("-"))
        x = (lo + hi) / 2.0
    else:
        x = float(label)
    return base, axis, label, x


def emit_plots_data(metrics_dir: str, out_dir: Optional[str] = None) -> tuple[list[str], list[str]]:
    """Write tidy per-axis-pair data files; returns (written paths, warnings)."""
    rows = read_metrics(metrics_dir)
    if not rows:
        raise ValueError(f"no metrics found in {metrics_dir}")
    out_dir = out_dir or os.path.join(metrics_dir, "plots")
    os.makedirs(out_dir, exist_ok=True)
    table = _episode_table(rows)
    written, warnings = [], []

    for fname, metric in EPISODE_SERIES.items():
        out = []
        for (rid, algo), per_seed in sorted(table.items()):
            by_ep = defaultdict(list)
            for seed, eps in per_seed.items():
                for ep, m in eps.items():
                    if metric in m:
                        by_ep[ep].append(m[metric])
            for ep in sorted(by_ep):
                vals = by_ep[ep]
                out.append([rid, algo, ep, _fmt(sum(vals) / len(vals)), len(vals)])
        if not out:
            warnings.append(f"{fname}: no '{metric}' series logged; file skipped")
            continue
        path = os.path.join(out_dir, fname)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run_id", "algorithm", "episode", metric, "n_seeds"])
            w.writerows(out)
        written.append(path)

    sweeps = defaultdict(list)
    for key in table:
        parsed = _parse_sweep(key[0])
        if parsed:
            sweeps[parsed[1]].append((key, parsed))
    for axis, files in SWEEP_SERIES.items():
        for fname, metrics in files.items():
            if axis not in sweeps:
                warnings.append(f"{fname}: no {axis} sweep in {metrics_dir}; file skipped")
                continue
            out = []
            for (rid, algo), (base, _, label, x) in sorted(sweeps[axis], key=lambda kv: (kv[0][1], kv[1][3])):
                per_seed = table[(rid, algo)]
                row = [base, algo, label, _fmt(x)]
                missing = False
                for metric in metrics:
                    vals = [m[metric] for eps in per_seed.values() for m in eps.values() if metric in m]
                    if not vals:
                        missing = True
                        break
                    row.append(_fmt(sum(vals) / len(vals)))
                if not missing:
                    out.append(row)
            if not out:
                warnings.append(f"{fname}: metrics {metrics} missing; file skipped")
                continue
            path = os.path.join(out_dir, fname)
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["run_id", "algorithm", axis, "x", *metrics])
                w.writerows(out)
            written.append(path)
    for msg in warnings:
        log.warning(msg)
    return written, warnings


def evaluate(cfg: ExperimentConfig, checkpoint_path: str, seed: int, episodes: int,
             out_dir: str, run_id: str = "eval") -> RunSummary:
    """Greedy rollouts of a saved actor-critic; metrics go to ``out_dir``."""
    from .learner.loop import run_episode

    with np.load(checkpoint_path) as data:
        algo = str(data["__algorithm__"])
    env = Env(cfg)
    agent = make_agent(algo, cfg, seed, env)
    load_checkpoint(agent, cfg, checkpoint_path)
    os.makedirs(out_dir, exist_ok=True)
    hist = {}
    start = time.perf_counter()
    with MetricsWriter(os.path.join(out_dir, f"{run_id}__{algo}.csv"), run_id, algo) as writer:
        for ep in range(episodes):
            s = run_episode(env, agent, seed, ep, explore=False, learn=False)
            hist[ep] = s
            writer.write(seed, ep, s)
    agg, finals = _final_window_aggregates({seed: hist}, episodes)
    return RunSummary(run_id, algo, [seed], episodes, episodes, agg, finals, cfg.digest(),
                      time.perf_counter() - start)
