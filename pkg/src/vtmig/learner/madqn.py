"""Independent deep Q-learners over a discretised action grid.

Each agent sees its own normalised node features plus the global state and
picks one joint setting of its action components, every component taking one
of ``bins`` evenly spaced values in [0, 1].
"""

from __future__ import annotations

import numpy as np

from .. import gcn
from .._rng import derive_rng
from ..config import ExperimentConfig
from ..env import N_FEATURES, N_GLOBAL, JointAction, Observation
from .maddpg import tiers_for
from .nets import MLP, Adam, soft_update
from .replay import ReplayBuffer


def decode(index: np.ndarray, dims: int, bins: int) -> np.ndarray:
    """Flat action indices -> component values, most significant component first."""
    index = np.asarray(index)
    values = np.linspace(0.0, 1.0, bins)
    digits = np.empty(index.shape + (dims,), dtype=int)
    rest = index.copy()
    for k in range(dims - 1, -1, -1):
        digits[..., k] = rest % bins
        rest = rest // bins
    return values[digits]


def epsilon(step: int, total: int, start: float, end: float) -> float:
    half = max(total // 2, 1)
    frac = min(step / half, 1.0)
    return (1.0 - frac) * start + frac * end


class MADQN:
    name = "madqn"

    def __init__(self, config: ExperimentConfig, seed: int, total_steps=None):
        lc, bc, w = config.learner, config.baselines, config.world
        self.cfg = config
        self.V, self.J, self.I = w.n_vehicles, w.n_edges, w.n_clouds
        self.bins = bc.madqn_bins
        self.tiers = tiers_for(self.V, self.J, self.I)
        self.n_agents = self.V + self.J + self.I
        self.gamma, self.tau, self.batch, self.warmup = lc.gamma, lc.tau, lc.batch_size, lc.warmup
        self.total_steps = total_steps or lc.episodes * lc.steps_per_episode
        self.eps_start, self.eps_end = bc.eps_start, bc.eps_end
        self.xnorm = gcn.RunningNorm(N_FEATURES)
        self.gnorm = gcn.RunningNorm(N_GLOBAL)
        self.nets, self.targets, self.opts = {}, {}, {}
        for t in self.tiers:
            rngs = [derive_rng(seed, "dqn", t.name, k) for k in range(t.count)]
            net = MLP([N_FEATURES + N_GLOBAL, *lc.hidden, self.bins ** t.act_dim], t.count, rngs)
            self.nets[t.name], self.targets[t.name] = net, net.copy()
            self.opts[t.name] = Adam(net.params, bc.madqn_lr)
        self.buffer = ReplayBuffer(lc.buffer_size)
        self.rng = derive_rng(seed, "dqn-explore")
        self.replay_rng = derive_rng(seed, "replay")
        self.steps = 0
        self._last_index = None

    def _inputs(self, X: np.ndarray, g: np.ndarray, t) -> np.ndarray:
        """(count, B, F+G) inputs for one tier from batched features."""
        x = self.xnorm(X[:, t.offset:t.offset + t.count, :])
        gg = np.broadcast_to(self.gnorm(g)[:, None, :], (X.shape[0], t.count, N_GLOBAL))
        return np.ascontiguousarray(np.swapaxes(np.concatenate([x, gg], axis=2), 0, 1))

    def act(self, obs: Observation, explore: bool = True) -> JointAction:
        if explore:
            self.xnorm.update(obs.node_features)
            self.gnorm.update(obs.global_vector)
        eps = epsilon(self.steps, self.total_steps, self.eps_start, self.eps_end) if explore else 0.0
        parts, indices = [], []
        for t in self.tiers:
            n_act = self.bins ** t.act_dim
            if t.count == 0:
                parts.append(np.zeros((0, t.act_dim)))
                continue
            q = self.nets[t.name](self._inputs(obs.node_features[None], obs.global_vector[None], t))[:, 0, :]
            idx = np.argmax(q, axis=1)
            if explore:
                # draw both streams every step so exploration noise does not depend on eps
                coin = self.rng.random(t.count)
                rand = self.rng.integers(0, n_act, size=t.count)
                idx = np.where(coin < eps, rand, idx)
            indices.append(idx)
            parts.append(decode(idx, t.act_dim, self.bins))
        self._last_index = np.concatenate(indices) if indices else np.zeros(0, int)
        return JointAction(*parts)

    def remember(self, obs, action, reward, next_obs, done) -> None:
        from ..env import scalarize
        r = scalarize(self.cfg.objective.weights, reward)
        self.buffer.add(x=obs.node_features.astype(np.float32), g=obs.global_vector, a=self._last_index,
                        r=r, x2=next_obs.node_features.astype(np.float32), g2=next_obs.global_vector,
                        done=bool(done))
        self.steps += 1

    def update(self):
        if len(self.buffer) < max(self.warmup, self.batch):
            return None
        b = self.buffer.sample(self.batch, self.replay_rng)
        B = self.batch
        X, X2 = b["x"].astype(float), b["x2"].astype(float)
        losses = []
        col = 0
        for t in self.tiers:
            if t.count == 0:
                continue
            net = self.nets[t.name]
            q_next = self.targets[t.name](self._inputs(X2, b["g2"], t)).max(axis=2)  # (count, B)
            y = np.where(b["done"][None, :], b["r"][None, :], b["r"][None, :] + self.gamma * q_next)
            q, cache = net.forward(self._inputs(X, b["g"], t))
            a = b["a"][:, col:col + t.count].T  # (count, B)
            chosen = np.take_along_axis(q, a[..., None], axis=2)[..., 0]
            td = chosen - y
            losses.append(np.mean(td * td))
            grad = np.zeros_like(q)
            np.put_along_axis(grad, a[..., None], (2.0 * td / B)[..., None], axis=2)
            grads, _ = net.backward(cache, grad)
            self.opts[t.name].step(grads)
            net.touch()
            soft_update(net.params, self.targets[t.name].params, self.tau)
            col += t.count
        return {"critic_loss": float(np.mean(losses))}
