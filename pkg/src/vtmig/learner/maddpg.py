"""Multi-objective multi-agent deterministic actor-critic.

With ``n_critics=5`` every objective has its own centralised critic and the
actors climb the sign-corrected, weight-averaged sum of the critics. With
``n_critics=1`` the same machinery becomes plain MADDPG on the scalarised
reward. Critic ``k`` is initialised from the same stream in both modes, so a
one-hot weight on the first objective makes the two trainers produce
identical numbers.

Node embeddings come from a two-layer GCN trained through the critic loss;
actors read only their own node's embedding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .. import gcn
from .._rng import derive_rng
from ..config import ExperimentConfig
from ..env import CLOUD_ACT, EDGE_ACT, N_FEATURES, N_GLOBAL, OBJECTIVES, SIGNS, VEHICLE_ACT, JointAction, Observation
from .nets import MLP, Adam, soft_update
from .replay import ReplayBuffer


def bellman_target(reward, gamma: float, q_next, terminal) -> np.ndarray:
    """r when terminal, else r + gamma * q_next; broadcasts over objectives and batch."""
    reward = np.asarray(reward, dtype=float)
    q_next = np.asarray(q_next, dtype=float)
    return np.where(np.asarray(terminal, dtype=bool), reward, reward + gamma * q_next)


def critic_loss(q: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean squared TD error per objective, averaged over objectives.

    ``q`` and ``target`` are (K, B). Returns the averaged loss, the K
    per-objective losses, and dL_k/dq_k (each critic follows its own loss).
    """
    q = np.asarray(q, dtype=float)
    target = np.asarray(target, dtype=float)
    if q.ndim != 2 or q.shape[1] == 0:
        raise ValueError("empty batch")
    td = q - target
    per = np.mean(td * td, axis=1)
    return float(np.mean(per)), per, 2.0 * td / q.shape[1]


def actor_output_grad(weights: np.ndarray, signs: np.ndarray, batch: int) -> np.ndarray:
    """d(-J)/dQ_k for J = mean_b sum_k w_k s_k Q_k, shaped (K, B, 1)."""
    coef = -(np.asarray(weights, float) * np.asarray(signs, float)) / batch
    return np.repeat(coef[:, None, None], batch, axis=1)


def noise_scale(step: int, total: int, start: float, end: float) -> float:
    """Linear decay over the first half of training, then flat."""
    half = max(total // 2, 1)
    frac = min(step / half, 1.0)
    return (1.0 - frac) * start + frac * end


@dataclass
class Tier:
    name: str
    offset: int  # first node index
    count: int
    act_dim: int
    act_offset: int  # first column in the flat joint action


def tiers_for(n_vehicles: int, n_edges: int, n_clouds: int) -> list[Tier]:
    out, node, col = [], 0, 0
    for name, n, d in (("vehicle", n_vehicles, VEHICLE_ACT), ("edge", n_edges, EDGE_ACT),
                       ("cloud", n_clouds, CLOUD_ACT)):
        out.append(Tier(name, node, n, d, col))
        node += n
        col += n * d
    return out


class GraphEncoder:
    """Feature normalisation plus a two-layer GCN with a target copy."""

    def __init__(self, n_vehicles, n_edges, n_clouds, hidden, out, rng):
        self.V, self.J, self.I = n_vehicles, n_edges, n_clouds
        self.norm = gcn.RunningNorm(N_FEATURES)
        self.layers = gcn.init_layers([N_FEATURES, hidden, out], rng)
        self.target = [gcn.GcnLayer(l.weight.copy(), l.activation) for l in self.layers]
        base = gcn.graph_from_coverage(np.zeros((n_vehicles, n_edges), bool), n_clouds).adjacency
        self.base = base

    @property
    def params(self) -> list[np.ndarray]:
        return [l.weight for l in self.layers]

    @property
    def target_params(self) -> list[np.ndarray]:
        return [l.weight for l in self.target]

    def operator(self, coverage: np.ndarray) -> np.ndarray:
        cov = np.asarray(coverage, dtype=float)
        lead = cov.shape[:-2]
        A = np.broadcast_to(self.base, lead + self.base.shape).copy()
        V, J = self.V, self.J
        A[..., :V, V:V + J] = cov
        A[..., V:V + J, :V] = np.swapaxes(cov, -1, -2)
        return gcn.normalized_adjacency(A)

    def encode(self, X, coverage, target: bool = False):
        layers = self.target if target else self.layers
        return gcn.forward(self.norm(X), self.operator(coverage), layers)


class MultiObjectiveMADDPG:
    """Trainer for all agents; ``n_critics`` is 5 (multi-objective) or 1 (scalarised)."""

    name = "mo-maddpg"

    def __init__(self, config: ExperimentConfig, seed: int, n_critics: int = 5,
                 weights: Optional[Sequence[float]] = None, total_steps: Optional[int] = None):
        if n_critics not in (1, len(OBJECTIVES)):
            raise ValueError("n_critics must be 1 or 5")
        lc = config.learner
        w = config.world
        self.cfg = config
        self.V, self.J, self.I = w.n_vehicles, w.n_edges, w.n_clouds
        self.N = self.V + self.J + self.I
        self.K = n_critics
        self.omega = np.asarray(config.objective.weights if weights is None else weights, dtype=float)
        self.omega_norm = self.omega / self.omega.sum() if self.omega.sum() > 0 else self.omega
        self.gamma, self.tau = lc.gamma, lc.tau
        self.batch, self.warmup = lc.batch_size, lc.warmup
        self.update_every = lc.update_every
        self.total_steps = total_steps or lc.episodes * lc.steps_per_episode
        self.emb = lc.gcn_out
        self.tiers = tiers_for(self.V, self.J, self.I)
        self.act_dim = sum(t.count * t.act_dim for t in self.tiers)

        self.encoder = GraphEncoder(self.V, self.J, self.I, lc.gcn_hidden, lc.gcn_out, derive_rng(seed, "gcn"))
        self.gnorm = gcn.RunningNorm(N_GLOBAL)
        self.actors: dict[str, MLP] = {}
        self.actor_targets: dict[str, MLP] = {}
        self.actor_opt: dict[str, Adam] = {}
        for t in self.tiers:
            members = 1 if lc.share_tier_weights else t.count
            rngs = [derive_rng(seed, "actor", t.name, k) for k in range(members)]
            net = MLP([self.emb, *lc.hidden, t.act_dim], members, rngs, out_act="sigmoid")
            self.actors[t.name] = net
            self.actor_targets[t.name] = net.copy()
            self.actor_opt[t.name] = Adam(net.params, lc.actor_lr)
        d_in = N_GLOBAL + self.N * self.emb + self.act_dim
        crngs = [derive_rng(seed, "critic", k) for k in range(self.K)]
        self.critic = MLP([d_in, *lc.hidden, 1], self.K, crngs)
        self.critic_target = self.critic.copy()
        self.critic_opt = Adam(self.critic.params, lc.critic_lr)
        self.gcn_opt = Adam(self.encoder.params, lc.critic_lr)

        self.buffer = ReplayBuffer(lc.buffer_size)
        self.noise_rng = derive_rng(seed, "noise")
        self.replay_rng = derive_rng(seed, "replay")
        self.steps = 0

    # -- acting ----------------------------------------------------------------
    def _policy(self, Z: np.ndarray, target: bool = False) -> tuple[np.ndarray, dict]:
        """Joint action (B, A) from embeddings (B, N, emb); caches per tier."""
        nets = self.actor_targets if target else self.actors
        B = Z.shape[0]
        out = np.zeros((B, self.act_dim))
        caches = {}
        for t in self.tiers:
            if t.count == 0:
                continue
            z = Z[:, t.offset:t.offset + t.count, :]
            net = nets[t.name]
            if net.members == 1:
                x = z.reshape(1, B * t.count, self.emb)
            else:
                x = np.ascontiguousarray(np.swapaxes(z, 0, 1))
            y, cache = net.forward(x)
            y = y.reshape(B, t.count, t.act_dim) if net.members == 1 else np.swapaxes(y, 0, 1)
            out[:, t.act_offset:t.act_offset + t.count * t.act_dim] = y.reshape(B, -1)
            caches[t.name] = cache
        return out, caches

    def act(self, obs: Observation, explore: bool = True) -> JointAction:
        if explore:
            self.encoder.norm.update(obs.node_features)
            self.gnorm.update(obs.global_vector)
        Z, _ = self.encoder.encode(obs.node_features[None], obs.coverage[None])
        a, _ = self._policy(Z)
        a = a[0]
        if explore:
            sigma = noise_scale(self.steps, self.total_steps, self.cfg.learner.noise_start,
                                self.cfg.learner.noise_end)
            a = np.clip(a + sigma * self.noise_rng.standard_normal(a.shape), 0.0, 1.0)
        return JointAction.from_flat(a, self.V, self.J, self.I)

    def remember(self, obs: Observation, action: JointAction, reward, next_obs: Observation, done: bool) -> None:
        r = reward.as_array() if hasattr(reward, "as_array") else np.asarray(reward, float)
        self.buffer.add(x=obs.node_features.astype(np.float32), cov=obs.coverage, g=obs.global_vector,
                        a=action.flat(), r=r, x2=next_obs.node_features.astype(np.float32),
                        cov2=next_obs.coverage, g2=next_obs.global_vector, done=bool(done))
        self.steps += 1

    # -- learning --------------------------------------------------------------
    def _rewards(self, r: np.ndarray) -> np.ndarray:
        """(K, B) rewards: per-objective, or the scalarised sum for a single critic."""
        if self.K == len(OBJECTIVES):
            return r.T
        w = self.omega
        s = w[0] * r[:, 0] + w[1] * r[:, 1] - (w[2] * r[:, 2] + w[3] * r[:, 3] + w[4] * r[:, 4])
        return s[None, :]

    def _critic_in(self, g, Z, a) -> np.ndarray:
        B = Z.shape[0]
        x = np.concatenate([self.gnorm(g), Z.reshape(B, -1), a], axis=1)
        return np.ascontiguousarray(np.broadcast_to(x, (self.K,) + x.shape))

    def update(self) -> Optional[dict]:
        if len(self.buffer) < max(self.warmup, self.batch) or self.steps % self.update_every:
            return None
        b = self.buffer.sample(self.batch, self.replay_rng)
        B = self.batch
        enc = self.encoder

        # targets
        Z2, _ = enc.encode(b["x2"].astype(float), b["cov2"], target=True)
        a2, _ = self._policy(Z2, target=True)
        q2 = self.critic_target(self._critic_in(b["g2"], Z2, a2))[..., 0]
        y = bellman_target(self._rewards(b["r"]), self.gamma, q2, b["done"][None, :])

        # critics and encoder
        Z, gcache = enc.encode(b["x"].astype(float), b["cov"])
        q, ccache = self.critic.forward(self._critic_in(b["g"], Z, b["a"]))
        loss, per, dq = critic_loss(q[..., 0], y)
        cgrads, din = self.critic.backward(ccache, dq[..., None])
        wts = self.omega_norm if self.K > 1 else np.ones(1)
        dz = (wts[:, None, None] * din).sum(axis=0)[:, N_GLOBAL:N_GLOBAL + self.N * self.emb]
        ggrads, _ = gcn.backward(gcache, enc.layers, dz.reshape(B, self.N, self.emb))
        self.critic_opt.step(cgrads)
        self.critic.touch()
        self.gcn_opt.step(ggrads)

        # actors, against the refreshed critics
        a_new, acaches = self._policy(Z)
        q_new, qcache = self.critic.forward(self._critic_in(b["g"], Z, a_new))
        signs = SIGNS if self.K > 1 else np.ones(1)
        coef = self.omega if self.K > 1 else np.ones(1)
        _, din = self.critic.backward(qcache, actor_output_grad(coef, signs, B), params=False)
        da = din.sum(axis=0)[:, N_GLOBAL + self.N * self.emb:]
        for t in self.tiers:
            if t.count == 0:
                continue
            g = da[:, t.act_offset:t.act_offset + t.count * t.act_dim].reshape(B, t.count, t.act_dim)
            net = self.actors[t.name]
            g = g.reshape(1, B * t.count, t.act_dim) if net.members == 1 else np.ascontiguousarray(np.swapaxes(g, 0, 1))
            grads, _ = net.backward(acaches[t.name], g)
            self.actor_opt[t.name].step(grads)
            net.touch()

        # targets track the online networks
        soft_update(self.critic.params, self.critic_target.params, self.tau)
        soft_update(enc.params, enc.target_params, self.tau)
        for t in self.tiers:
            soft_update(self.actors[t.name].params, self.actor_targets[t.name].params, self.tau)

        out = {"critic_loss": loss}
        if self.K > 1:
            for name, v in zip(OBJECTIVES, per):
                out[f"critic_loss_{name}"] = float(v)
        out["actor_objective"] = float((coef * signs) @ q_new[..., 0].mean(axis=1))
        return out

    # -- persistence -----------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for k, p in enumerate(self.encoder.params):
            out[f"gcn.{k}"] = p
        for k, p in enumerate(self.critic.params):
            out[f"critic.{k}"] = p
        for name, net in self.actors.items():
            for k, p in enumerate(net.params):
                out[f"actor.{name}.{k}"] = p
        for prefix, norm in (("norm.x", self.encoder.norm), ("norm.g", self.gnorm)):
            st = norm.state()
            out[f"{prefix}.count"] = np.array(st["count"])
            out[f"{prefix}.mean"] = st["mean"]
            out[f"{prefix}.var"] = st["var"]
        return out

    def load_state_dict(self, state: dict) -> None:
        for k, p in enumerate(self.encoder.params):
            p[...] = state[f"gcn.{k}"]
        for k, p in enumerate(self.critic.params):
            p[...] = state[f"critic.{k}"]
        self.critic.touch()
        for name, net in self.actors.items():
            for k, p in enumerate(net.params):
                p[...] = state[f"actor.{name}.{k}"]
            net.touch()
        for prefix, norm in (("norm.x", self.encoder.norm), ("norm.g", self.gnorm)):
            norm.load({"count": float(state[f"{prefix}.count"]), "mean": state[f"{prefix}.mean"],
                       "var": state[f"{prefix}.var"]})


class MADDPG(MultiObjectiveMADDPG):
    """Single critic on the pre-scalarised reward."""

    name = "maddpg"

    def __init__(self, config: ExperimentConfig, seed: int, weights=None, total_steps=None):
        super().__init__(config, seed, n_critics=1, weights=weights, total_steps=total_steps)
