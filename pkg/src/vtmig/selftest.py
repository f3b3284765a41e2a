"""Oracle battery behind ``vtmig selftest``.

Each check compares a model against its independent reference in
:mod:`vtmig.oracles` and prints one PASS/FAIL line.
"""

from __future__ import annotations

import math
import time
from typing import Callable

import numpy as np

from . import costs, gcn, netlink, oracles
from ._rng import derive_rng
from .learner.maddpg import bellman_target, critic_loss
from .scenario import VtTaskProfile
from .stackelberg import GameSpec, backward_induction, verify_se


def check_closed_forms(n: int = 100) -> str:
    rng = derive_rng(0, "selftest", "forms")
    for _ in range(n):
        b, p, g = rng.uniform(1e5, 2e7), rng.uniform(0.05, 20), rng.uniform(1e-4, 1e-2)
        d, e, n0 = rng.uniform(5, 5e4), rng.uniform(1.5, 4), rng.uniform(1e-13, 1e-9)
        r = netlink.shannon_rate(netlink.LinkParams(b, p, g, d, e, n0))
        if r != oracles.rate(b, p, g, d, e, n0):
            return f"shannon_rate mismatch at b={b}"
        task = VtTaskProfile(rng.uniform(1e6, 4e8), rng.uniform(1, 200), 5.0)
        f = rng.uniform(1e8, 1e10)
        if netlink.tx_latency(task, r) != oracles.transmission_time(task.data_volume_bits, r):
            return "tx_latency mismatch"
        if netlink.exec_latency(task, f) != oracles.compute_time(task.total_cycles, f):
            return "exec_latency mismatch"
        if netlink.reinstantiation_delay(task, f) != oracles.compute_time(task.total_cycles, f):
            return "reinstantiation_delay mismatch"
        price = rng.uniform(0, 1)
        if costs.migration_cost(task, price) != oracles.megabyte_cost(task.data_volume_bits, price):
            return "migration_cost mismatch"
        L, Q, R = rng.uniform(0, 10, 3)
        w = rng.dirichlet(np.ones(3))
        a, bb = rng.uniform(0.5, 2, 3), rng.uniform(0.1, 5, 3)
        ux = costs.ux_rating(L, Q, R, costs.UxParams(*w, a[0], bb[0], a[1], bb[1], a[2], bb[2]))
        if not math.isclose(ux, oracles.experience(L, Q, R, w, a, bb), rel_tol=1e-12):
            return "ux_rating mismatch"
    return ""


def check_queue(n_events: int) -> str:
    """Formula with the simulated mean queue length against the simulated mean wait, at half load."""
    rng = derive_rng(0, "selftest", "queue")
    s, mu = 2, 1.0
    lam = 0.5 * s * mu
    sim = oracles.simulate_priority_queue(lam, mu, s, [1.0], n_events, rng)
    est = netlink.queue_delay(netlink.QueueState(lam, mu, s, sim["mean_queue_length"]))
    err = abs(est - sim["mean_wait"]) / sim["mean_wait"]
    return "" if err <= 0.05 else f"relative error {err:.3f}"


def check_gcn() -> str:
    g = gcn.NetworkGraph(1, 1, 0, np.array([[0.0, 1.0], [1.0, 0.0]]))
    out, _ = gcn.forward(np.array([[1.0], [3.0]]), g, [gcn.GcnLayer(np.array([[1.0]]), "identity")])
    if not np.array_equal(out, np.array([[2.0], [2.0]])):
        return f"two-node case gave {out.ravel()}"
    rng = derive_rng(0, "selftest", "gcn")
    A = (rng.random((5, 5)) < 0.4).astype(float)
    A = np.triu(A, 1)
    A = A + A.T
    graph = gcn.NetworkGraph(5, 0, 0, A)
    H = rng.normal(size=(5, 3))
    layers = gcn.init_layers([3, 4, 2], rng)
    ref = oracles.dense_gcn(H, A, [l.weight for l in layers], [l.activation for l in layers])
    out, cache = gcn.forward(H, graph, layers)
    if not np.allclose(out, ref, rtol=1e-12, atol=1e-12):
        return "forward differs from dense oracle"
    U = rng.normal(size=out.shape)
    grads, dH = gcn.backward(cache, layers, U)

    def loss():
        return float(np.sum(gcn.forward(H, graph, layers)[0] * U))
    for k, layer in enumerate(layers):
        num = oracles.central_difference(loss, layer.weight)
        if oracles.relative_error(grads[k], num, floor=1e-6) > 1e-4:
            return f"layer {k} gradient off"
    return ""


def check_game(n_specs: int = 5) -> str:
    rng = derive_rng(0, "selftest", "game")
    for _ in range(n_specs):
        eta, c_e, c_c = rng.uniform(1, 3), rng.uniform(0.05, 0.15), rng.uniform(0.02, 0.1)
        spec = GameSpec(eta=[eta], vehicle_cap=[10.0], vehicle_edge=[0], vehicle_cloud=[0],
                        edge_cost=[c_e], edge_capacity=[60.0], edge_own=[0.5], edge_cloud=[0],
                        cloud_cost=[c_c], cloud_capacity=[400.0], price_lo=0.3, price_hi=0.5,
                        grid_points=41)
        out = backward_induction(spec)
        ref = oracles.chain_game_by_grid(eta, 10.0, c_e, 60.0, 0.5, c_c, 400.0, spec.grid)
        step = spec.grid[1] - spec.grid[0]
        if abs(out.cloud_prices[0] - ref["cloud_price"]) > step + 1e-12:
            return "cloud price off the grid-search optimum"
        if abs(out.edge_prices[0] - ref["edge_price"]) > step + 1e-12:
            return "edge price off the grid-search optimum"
        rep = verify_se(out, spec)
        if not rep.is_se:
            return f"not an equilibrium: {rep.deviator} gains {rep.worst_gain:.2e}"
    return ""


def check_learner() -> str:
    r, q = np.array([1.0, -2.0]), np.array([0.5, 4.0])
    y = bellman_target(r, 0.9, q, np.array([False, True]))
    if not np.array_equal(y, np.array([1.0 + 0.9 * 0.5, -2.0])):
        return "bellman target"
    qs = np.arange(10.0).reshape(5, 2)
    tgt = np.zeros((5, 2))
    loss, per, _ = critic_loss(qs, tgt)
    if not math.isclose(loss, float(np.mean(np.mean(qs ** 2, axis=1))), rel_tol=1e-15):
        return "critic loss averaging"
    return ""


def run_selftest(quick: bool = True, echo: Callable[[str], None] = print) -> bool:
    checks = [
        ("closed-form physics", check_closed_forms),
        ("queue delay vs simulation", lambda: check_queue(200_000 if quick else 1_000_000)),
        ("graph convolution", check_gcn),
        ("pricing game", check_game),
        ("learner targets and losses", check_learner),
    ]
    ok = True
    for name, fn in checks:
        t = time.perf_counter()
        try:
            msg = fn()
        except Exception as exc:  # report and keep going
            msg = f"{type(exc).__name__}: {exc}"
        passed = not msg
        ok &= passed
        echo(f"{'PASS' if passed else 'FAIL'} {name} ({time.perf_counter() - t:.1f}s){'' if passed else ': ' + msg}")
    return ok
