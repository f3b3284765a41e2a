"""Learners: the multi-objective actor-critic, its scalar variant and the baselines."""

from .ga import GeneticSearch
from .loop import RandomPolicy, episode_seed, run_episode, train
from .madqn import MADQN
from .maddpg import (MADDPG, MultiObjectiveMADDPG, actor_output_grad, bellman_target,
                     critic_loss, noise_scale)
from .nets import MLP, Adam, soft_update
from .replay import ReplayBuffer

__all__ = [
    "MADDPG", "MADQN", "MLP", "Adam", "GeneticSearch", "MultiObjectiveMADDPG", "RandomPolicy",
    "ReplayBuffer", "actor_output_grad", "bellman_target", "critic_loss", "episode_seed",
    "noise_scale", "run_episode", "soft_update", "train",
]
