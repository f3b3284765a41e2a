"""Graph view of the network and a bias-free graph convolution.

Node order is vehicles, then edge nodes, then clouds. Links join a vehicle to
every edge node covering it, every edge node to every cloud, and edge nodes to
their ring neighbours. Self-loops are added only inside the propagation
operator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import World

RELU = "relu"
IDENTITY = "identity"


@dataclass
class NetworkGraph:
    n_vehicles: int
    n_edges: int
    n_clouds: int
    adjacency: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.n_vehicles + self.n_edges + self.n_clouds

    def vehicle_index(self, v: int) -> int:
        return v

    def edge_index(self, j: int) -> int:
        return self.n_vehicles + j

    def cloud_index(self, i: int) -> int:
        return self.n_vehicles + self.n_edges + i

    def links(self) -> list[tuple[int, int]]:
        r, c = np.nonzero(np.triu(self.adjacency))
        return list(zip(r.tolist(), c.tolist()))


def ring_neighbor_pairs(n_edges: int) -> list[tuple[int, int]]:
    """Adjacent edge nodes on the ring, each pair once with the smaller index first."""
    if n_edges < 2:
        return []
    if n_edges == 2:
        return [(0, 1)]
    return sorted({tuple(sorted((k, (k + 1) % n_edges))) for k in range(n_edges)})


def graph_from_coverage(coverage: np.ndarray, n_clouds: int) -> NetworkGraph:
    """Graph from a (V, J) vehicle/edge coverage bitmap."""
    coverage = np.asarray(coverage, dtype=bool)
    V, J = coverage.shape
    N = V + J + n_clouds
    A = np.zeros((N, N))
    A[:V, V:V + J] = coverage
    A[V:V + J, V + J:] = 1.0
    for a, b in ring_neighbor_pairs(J):
        A[V + a, V + b] = 1.0
    A = np.maximum(A, A.T)
    return NetworkGraph(V, J, n_clouds, A)


def coverage_bitmap(world: World) -> np.ndarray:
    V, J = len(world.vehicles), len(world.edges)
    cov = np.zeros((V, J), dtype=bool)
    for vid, edges in world.associations.items():
        cov[vid, edges] = True
    return cov


def build_graph(world: World) -> NetworkGraph:
    return graph_from_coverage(coverage_bitmap(world), len(world.clouds))


def normalized_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2; works on a single matrix or a stack of them."""
    A = np.asarray(adjacency, dtype=float)
    a_bar = A + np.eye(A.shape[-1])
    deg = a_bar.sum(axis=-1)
    # one square root per entry keeps equal-degree pairs exact
    return a_bar / np.sqrt(deg[..., :, None] * deg[..., None, :])


@dataclass
class GcnLayer:
    weight: np.ndarray
    activation: str = RELU

    def __post_init__(self):
        if self.activation not in (RELU, IDENTITY):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2:
            raise ValueError("weight must be a matrix")


def init_layers(dims: Sequence[int], rng: np.random.Generator,
                activations: Sequence[str] | None = None) -> list[GcnLayer]:
    """Glorot-uniform weights; ReLU on hidden layers, identity on the output layer."""
    if activations is None:
        activations = [RELU] * (len(dims) - 2) + [IDENTITY]
    layers = []
    for (a, b), act in zip(zip(dims[:-1], dims[1:]), activations):
        lim = np.sqrt(6.0 / (a + b))
        layers.append(GcnLayer(rng.uniform(-lim, lim, size=(a, b)), act))
    return layers


@dataclass
class GcnCache:
    a_hat: np.ndarray
    inputs: list[np.ndarray]  # H^(l) entering each layer
    mixed: list[np.ndarray]  # A_hat @ H^(l)
    pre: list[np.ndarray]  # A_hat @ H^(l) @ W^(l)


def _operator(graph) -> np.ndarray:
    if isinstance(graph, NetworkGraph):
        return normalized_adjacency(graph.adjacency)
    return np.asarray(graph, dtype=float)


def forward(H: np.ndarray, graph, layers: Sequence[GcnLayer]) -> tuple[np.ndarray, GcnCache]:
    """Propagate features; ``graph`` is a NetworkGraph or a precomputed normalized operator.

    ``H`` may carry leading batch dimensions matching the operator's.
    """
    a_hat = _operator(graph)
    H = np.asarray(H, dtype=float)
    if H.shape[-2] != a_hat.shape[-1]:
        raise ValueError(f"feature rows {H.shape[-2]} != node count {a_hat.shape[-1]}")
    cache = GcnCache(a_hat, [], [], [])
    for layer in layers:
        if H.shape[-1] != layer.weight.shape[0]:
            raise ValueError(f"feature width {H.shape[-1]} != layer input {layer.weight.shape[0]}")
        mixed = a_hat @ H
        pre = mixed @ layer.weight
        cache.inputs.append(H)
        cache.mixed.append(mixed)
        cache.pre.append(pre)
        H = np.maximum(pre, 0.0) if layer.activation == RELU else pre
    return H, cache


def propagate(H: np.ndarray, graph, layers: Sequence[GcnLayer]) -> np.ndarray:
    return forward(H, graph, layers)[0]


def backward(cache: GcnCache | None, layers: Sequence[GcnLayer],
             upstream: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Weight gradients and the gradient w.r.t. the input features."""
    if cache is None or len(cache.pre) != len(layers):
        raise ValueError("missing forward cache")
    g = np.asarray(upstream, dtype=float)
    grads: list[np.ndarray] = [None] * len(layers)  # type: ignore[list-item]
    a_t = np.swapaxes(cache.a_hat, -1, -2)
    for k in range(len(layers) - 1, -1, -1):
        if layers[k].activation == RELU:
            g = g * (cache.pre[k] > 0)
        mixed = cache.mixed[k]
        gw = np.swapaxes(mixed, -1, -2) @ g
        grads[k] = gw.reshape(-1, *gw.shape[-2:]).sum(axis=0)
        g = a_t @ (g @ layers[k].weight.T)
    return grads, g


def gcn_gradients(H: np.ndarray, graph, layers: Sequence[GcnLayer],
                  upstream_grad: np.ndarray, cache: GcnCache | None = None) -> list[np.ndarray]:
    """Per-layer gradients of sum(upstream_grad * propagate(H))."""
    if cache is None:
        _, cache = forward(H, graph, layers)
    return backward(cache, layers, upstream_grad)[0]


class RunningNorm:
    """Per-feature running mean and variance, merged batch by batch."""

    def __init__(self, dim: int, eps: float = 1e-8):
        self.count = 0.0
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.eps = eps

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float).reshape(-1, self.mean.size)
        n = x.shape[0]
        if n == 0:
            return
        b_mean, b_var = x.mean(axis=0), x.var(axis=0)
        total = self.count + n
        delta = b_mean - self.mean
        m2 = self.var * self.count + b_var * n + delta ** 2 * self.count * n / total
        self.mean = self.mean + delta * n / total
        self.var = m2 / total
        self.count = total

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / np.sqrt(self.var + self.eps)

    def state(self) -> dict:
        return {"count": self.count, "mean": self.mean.copy(), "var": self.var.copy()}

    def load(self, state: dict) -> None:
        self.count = float(state["count"])
        self.mean = np.array(state["mean"], dtype=float)
        self.var = np.array(state["var"], dtype=float)
