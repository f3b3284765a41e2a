"""Genetic search over open-loop action schedules.

A chromosome is one episode's worth of joint actions, ``steps x action_dim``
genes in [0, 1]. Fitness is the episode's summed scalar reward. Each
generation is scored on one scenario (a fresh one per generation unless
``ga_resample`` is off); the best individual is carried over unchanged.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .._rng import derive_rng
from ..config import ExperimentConfig
from ..env import CLOUD_ACT, EDGE_ACT, VEHICLE_ACT, Env, JointAction
from .loop import episode_seed, summarize_episode


class _Schedule:
    """Replays a fixed action schedule through the agent interface."""

    def __init__(self, genes: np.ndarray, env: Env):
        self.genes, self.env, self.t = genes, env, 0

    def act(self, obs, explore=True):
        e = self.env
        a = JointAction.from_flat(self.genes[self.t], e.n_vehicles, e.n_edges, e.n_clouds)
        self.t += 1
        return a


def tournament(fitness: np.ndarray, size: int, rng: np.random.Generator) -> int:
    """Index of the fittest of ``size`` distinct random entrants (lowest index on ties)."""
    entrants = np.sort(rng.choice(len(fitness), size=min(size, len(fitness)), replace=False))
    return int(entrants[np.argmax(fitness[entrants])])


def one_point_crossover(a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    cut = int(rng.integers(1, a.size)) if a.size > 1 else 0
    fa, fb = a.ravel(), b.ravel()
    c1 = np.concatenate([fa[:cut], fb[cut:]]).reshape(a.shape)
    c2 = np.concatenate([fb[:cut], fa[cut:]]).reshape(a.shape)
    return c1, c2


def mutate(x: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform reset of each gene with probability ``p``."""
    hit = rng.random(x.shape) < p
    fresh = rng.random(x.shape)
    return np.where(hit, fresh, x)


class GeneticSearch:
    name = "ga"

    def __init__(self, config: ExperimentConfig, seed: int, resample: bool = True,
                 initial: Optional[np.ndarray] = None):
        bc, w = config.baselines, config.world
        self.cfg = config
        self.seed = seed
        self.resample = resample
        self.steps = config.learner.steps_per_episode
        self.act_dim = w.n_vehicles * VEHICLE_ACT + w.n_edges * EDGE_ACT + w.n_clouds * CLOUD_ACT
        self.rng = derive_rng(seed, "ga")
        self.pop_size, self.tsize = bc.ga_population, bc.ga_tournament
        self.p_cross, self.p_mut = bc.ga_crossover, bc.ga_mutation
        if initial is not None:
            self.population = np.array(initial, dtype=float)
        else:
            self.population = self.rng.random((self.pop_size, self.steps, self.act_dim))

    def evaluate(self, env: Env, generation: int) -> tuple[np.ndarray, list[dict]]:
        ep = generation if self.resample else 0
        fitness, summaries = [], []
        for genes in self.population:
            agent = _Schedule(genes, env)
            obs = env.reset(episode_seed(self.seed, ep))
            steps, done = [], False
            while not done:
                obs, _, done, m = env.step(agent.act(obs))
                steps.append(m)
            s = summarize_episode(steps, [])
            summaries.append(s)
            fitness.append(s["reward"])
        return np.array(fitness), summaries

    def breed(self, fitness: np.ndarray) -> None:
        rng = self.rng
        best = int(np.argmax(fitness))
        children = [self.population[best].copy()]
        while len(children) < len(self.population):
            a = self.population[tournament(fitness, self.tsize, rng)]
            b = self.population[tournament(fitness, self.tsize, rng)]
            if rng.random() < self.p_cross:
                a, b = one_point_crossover(a, b, rng)
            children.append(mutate(a, self.p_mut, rng))
            if len(children) < len(self.population):
                children.append(mutate(b, self.p_mut, rng))
        self.population = np.stack(children)

    def run(self, env: Env, generations: Optional[int] = None,
            on_generation: Optional[Callable[[int, dict, list], None]] = None) -> list[dict]:
        """One history record per generation, describing its best individual."""
        gens = self.cfg.baselines.ga_generations if generations is None else generations
        history = []
        for g in range(gens):
            fitness, summaries = self.evaluate(env, g)
            best = int(np.argmax(fitness))
            rec = dict(summaries[best])
            rec["population_mean_reward"] = float(np.mean(fitness))
            history.append(rec)
            if on_generation is not None:
                on_generation(g, rec, [])
            if g < gens - 1:
                self.breed(fitness)
        return history
