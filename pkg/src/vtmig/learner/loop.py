"""Episode loop shared by every learner, and per-episode metric aggregation."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .._rng import derive_seed
from ..env import CONSTRAINTS, Env

# step metrics averaged over an episode; "reward" and r_* are summed instead
MEAN_METRICS = ("latency", "energy", "cost", "ux", "utility", "energy_vehicle", "energy_edge",
                "energy_cloud", "n_offloaded")
SUM_METRICS = ("reward", "r_ux", "r_utility", "r_latency", "r_energy", "r_cost", "mask_events",
               "migration_trigger", *(f"viol_{c}" for c in CONSTRAINTS))


def episode_seed(seed: int, episode: int) -> int:
    """Scenario seed for one episode; learners and the GA share these."""
    return derive_seed(seed, "episode", episode)


def summarize_episode(steps: list[dict], updates: list[dict]) -> dict:
    out: dict[str, float] = {}
    for k in SUM_METRICS:
        out[k] = float(sum(m[k] for m in steps))
    for k in MEAN_METRICS:
        out[k] = float(sum(m[k] for m in steps) / len(steps))
    attempts = sum(m["migration_attempts"] for m in steps)
    out["migration_success_rate"] = float(sum(m["migration_successes"] for m in steps) / attempts) if attempts else 0.0
    if updates:
        for k in updates[0]:
            out[k] = float(sum(u[k] for u in updates) / len(updates))
    return out


def run_episode(env: Env, agent, seed: int, episode: int, *, explore: bool = True,
                learn: bool = True, step_log: Optional[list] = None) -> dict:
    obs = env.reset(episode_seed(seed, episode))
    steps, updates = [], []
    done = False
    while not done:
        action = agent.act(obs, explore=explore)
        nobs, reward, done, metrics = env.step(action)
        if learn:
            agent.remember(obs, action, reward, nobs, done)
            info = agent.update()
            if info:
                updates.append(info)
        steps.append(metrics)
        if step_log is not None:
            step_log.append(metrics)
        obs = nobs
    return summarize_episode(steps, updates)


def train(agent, env: Env, episodes: int, seed: int,
          on_episode: Optional[Callable[[int, dict, list], None]] = None,
          log_steps: bool = False) -> list[dict]:
    """Run ``episodes`` learning episodes; ``on_episode(ep, summary, step_metrics)`` after each."""
    history = []
    for ep in range(episodes):
        log: Optional[list] = [] if log_steps else None
        summary = run_episode(env, agent, seed, ep, step_log=log)
        history.append(summary)
        if on_episode is not None:
            on_episode(ep, summary, log or [])
    return history


class RandomPolicy:
    """Uniform actions from a fixed stream; no learning."""

    name = "random"

    def __init__(self, env: Env, seed: int):
        from .._rng import derive_rng
        self.env = env
        self.rng = derive_rng(seed, "random-policy")

    def act(self, obs, explore: bool = True):
        from ..env import JointAction
        e = self.env
        return JointAction(self.rng.random((e.n_vehicles, 4)), self.rng.random((e.n_edges, 3)),
                           self.rng.random((e.n_clouds, 3)))

    def remember(self, *args) -> None:
        pass

    def update(self):
        return None
