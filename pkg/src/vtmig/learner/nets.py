"""Dense networks with a leading ensemble axis, plus Adam.

Every parameter carries an ensemble dimension ``E`` so that a tier of agents
(or a set of critics) runs as one stacked matmul. Inputs are ``(E, B, in)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

ACTIVATIONS = ("relu", "identity", "sigmoid", "tanh")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name: str, z: np.ndarray, y: np.ndarray, g: np.ndarray) -> np.ndarray:
    if name == "relu":
        return g * (z > 0)
    if name == "sigmoid":
        return g * y * (1.0 - y)
    if name == "tanh":
        return g * (1.0 - y * y)
    return g


@dataclass
class ForwardCache:
    inputs: list
    pre: list
    post: list
    version: int


class MLP:
    """Stack of affine layers; hidden layers share one activation."""

    def __init__(self, sizes: Sequence[int], members: int, rng: np.random.Generator | Sequence,
                 hidden_act: str = "relu", out_act: str = "identity", bias: bool = True):
        if hidden_act not in ACTIVATIONS or out_act not in ACTIVATIONS:
            raise ValueError("unknown activation")
        self.sizes = tuple(int(s) for s in sizes)
        self.members = int(members)
        self.acts = [hidden_act] * (len(self.sizes) - 2) + [out_act]
        self.bias = bias
        # one generator per member keeps member k identical across ensemble sizes
        rngs = list(rng) if isinstance(rng, (list, tuple)) else [rng] * self.members
        if len(rngs) != self.members:
            raise ValueError("need one generator per member")
        self.params: list[np.ndarray] = []
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            lim = np.sqrt(6.0 / (a + b))
            W = np.stack([r.uniform(-lim, lim, size=(a, b)) for r in rngs]) if self.members else np.zeros((0, a, b))
            self.params.append(W)
            if bias:
                self.params.append(np.zeros((self.members, 1, b)))
        self.version = 0

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def weights(self, k: int) -> tuple[np.ndarray, np.ndarray | None]:
        if self.bias:
            return self.params[2 * k], self.params[2 * k + 1]
        return self.params[k], None

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
        x = np.asarray(x, dtype=float)
        if x.ndim != 3 or x.shape[0] != self.members or x.shape[2] != self.sizes[0]:
            raise ValueError(f"input shape {x.shape} does not match ({self.members}, B, {self.sizes[0]})")
        cache = ForwardCache([], [], [], self.version)
        h = x
        for k in range(self.n_layers):
            W, b = self.weights(k)
            z = h @ W
            if b is not None:
                z = z + b
            cache.inputs.append(h)
            cache.pre.append(z)
            h = _act(self.acts[k], z)
            cache.post.append(h)
        return h, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: ForwardCache | None, grad_out: np.ndarray,
                 params: bool = True) -> tuple[list[np.ndarray], np.ndarray]:
        """Parameter gradients (same layout as ``params``) and the input gradient.

        With ``params=False`` only the input gradient is computed.
        """
        if cache is None:
            raise ValueError("missing forward cache")
        if cache.version != self.version:
            raise ValueError("stale forward cache: parameters changed since the forward pass")
        g = np.asarray(grad_out, dtype=float)
        grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
        for k in range(self.n_layers - 1, -1, -1):
            g = _act_grad(self.acts[k], cache.pre[k], cache.post[k], g)
            W, b = self.weights(k)
            if params:
                gW = np.swapaxes(cache.inputs[k], 1, 2) @ g
                if self.bias:
                    grads[2 * k] = gW
                    grads[2 * k + 1] = g.sum(axis=1, keepdims=True)
                else:
                    grads[k] = gW
            g = g @ np.swapaxes(W, 1, 2)
        return grads, g

    def copy(self) -> "MLP":
        new = MLP.__new__(MLP)
        new.sizes, new.members, new.acts, new.bias = self.sizes, self.members, list(self.acts), self.bias
        new.params = [p.copy() for p in self.params]
        new.version = 0
        return new

    def touch(self) -> None:
        self.version += 1


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        """In-place update; parameters keep their identity."""
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def soft_update(online: Sequence[np.ndarray], target: Sequence[np.ndarray], tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, in place."""
    if len(online) != len(target):
        raise ValueError("parameter lists differ in length")
    for o, t in zip(online, target):
        if o.shape != t.shape:
            raise ValueError(f"shape mismatch {o.shape} vs {t.shape}")
        t *= 1.0 - tau
        t += tau * o
