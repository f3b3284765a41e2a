"""Acceptance criteria, one PASS/FAIL line each in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -rA``. The desk-scale learning
check trains for about half an hour on one core.
"""

import csv
import math
import time

import numpy as np
import pytest

from conftest import record_acceptance, small_config
from vtmig import costs, gcn, netlink, oracles
from vtmig._rng import derive_rng
from vtmig.config import default_config
from vtmig.env import Env, JointAction, reward_from_metrics, scalarize
from vtmig.harness import emit_plots_data, run_experiment
from vtmig.learner import (MADDPG, GeneticSearch, MultiObjectiveMADDPG, actor_output_grad,
                           bellman_target, critic_loss, soft_update, train)
from vtmig.learner.nets import MLP
from vtmig.netlink import LinkParams, Route
from vtmig.scenario import VtTaskProfile
from vtmig.stackelberg import GameSpec, backward_induction, verify_se

DESK = {"world.n_vehicles": 10, "world.n_edges": 3, "world.n_clouds": 1,
        "learner.steps_per_episode": 50, "learner.episodes": 300}


# -- 1. formula oracles -------------------------------------------------------------

def test_criterion_1_closed_forms():
    start = time.perf_counter()
    rng = derive_rng(0, "acceptance", "forms")
    n, bad = 200, []
    for _ in range(n):
        b, p, g = rng.uniform(1e5, 2e7), rng.uniform(0.05, 20), rng.uniform(1e-4, 1e-2)
        d, e, n0 = rng.uniform(5, 5e4), rng.uniform(1.5, 4), rng.uniform(1e-13, 1e-9)
        r = netlink.shannon_rate(LinkParams(b, p, g, d, e, n0))
        task = VtTaskProfile(rng.uniform(1e6, 4e8), rng.uniform(1, 200), 5.0)
        f_src, f_dst = rng.uniform(1e8, 1e15), rng.uniform(1e8, 1e15)
        k_src, k_dst = rng.uniform(1e-29, 1e-27), rng.uniform(1e-29, 1e-27)
        p_edge, r_bh = rng.uniform(1, 20), rng.uniform(1e6, 1e9)
        price = rng.uniform(0, 1)
        L, Q, R = rng.uniform(0, 10, 3)
        w, a, bb = rng.dirichlet(np.ones(3)), rng.uniform(0.5, 2, 3), rng.uniform(0.1, 5, 3)
        checks = {
            "rate": r == oracles.rate(b, p, g, d, e, n0),
            "tx": netlink.tx_latency(task, r) == oracles.transmission_time(task.data_volume_bits, r),
            "exec": netlink.exec_latency(task, f_src) == oracles.compute_time(task.total_cycles, f_src),
            "reinst": netlink.reinstantiation_delay(task, f_dst) == oracles.compute_time(task.total_cycles, f_dst),
            "cost": costs.migration_cost(task, price) == oracles.megabyte_cost(task.data_volume_bits, price),
        }
        inputs = costs.EnergyInputs(p, r, k_src, f_src, p_edge, r_bh, k_dst, f_dst)
        for route in (Route.V2E, Route.V2C, Route.V2E2C):
            for tc in (False, True):
                got = costs.energy(route, task, inputs, times_cycles=tc).total
                ref = oracles.route_energy(route.value, task.data_volume_bits, task.total_cycles, p, r,
                                           k_src, f_src, p_edge, r_bh, k_dst, f_dst, times_cycles=tc)
                checks[f"energy {route.value}"] = math.isclose(got, ref, rel_tol=1e-14)
        ux = costs.ux_rating(L, Q, R, costs.UxParams(*w, a[0], bb[0], a[1], bb[1], a[2], bb[2]))
        checks["ux"] = math.isclose(ux, oracles.experience(L, Q, R, w, a, bb), rel_tol=1e-14)
        bad += [k for k, ok in checks.items() if not ok]
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 120
    record_acceptance("1a formula oracles (closed forms)", ok,
                      f"{n} random inputs per formula, mismatches={sorted(set(bad))}, {elapsed:.1f}s")
    assert ok


QUEUE_GRID = [(u, s) for u in (0.25, 0.5, 0.75) for s in (1, 2, 4)]


@pytest.mark.xfail(strict=True, reason="the queue-delay formula equals the simulated mean wait only at "
                                       "utilisation mu/(1+mu); see the decisions ledger")
def test_criterion_1_queue_delay_against_simulation():
    start = time.perf_counter()
    errors = {}
    for u, s in QUEUE_GRID:
        lam = u * s
        sim = oracles.simulate_priority_queue(lam, 1.0, s, [1.0], 1_000_000,
                                              derive_rng(0, "acceptance", "queue", s, int(u * 100)))
        est = netlink.queue_delay(netlink.QueueState(lam, 1.0, s, sim["mean_queue_length"]))
        errors[(u, s)] = abs(est - sim["mean_wait"]) / sim["mean_wait"]
    # priority classes at half load, each class weighted by its rank
    sim = oracles.simulate_priority_queue(1.0, 1.0, 2, [1 / 3] * 3, 1_000_000,
                                          derive_rng(0, "acceptance", "queue", "classes"))
    for k, wait in enumerate(sim["class_wait"]):
        est = netlink.queue_delay(netlink.QueueState(1.0, 1.0, 2, sim["mean_queue_length"], k + 1))
        errors[("class", k + 1)] = abs(est - wait) / wait
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    ok = all(e <= 0.05 for e in errors.values()) and elapsed < 120
    detail = ", ".join(f"{k}:{v:.3f}" for k, v in errors.items())
    record_acceptance("1b formula oracles (queue delay within 5% of simulation)", ok,
                      f"worst {worst} rel err {errors[worst]:.3f}; {detail}; {elapsed:.1f}s")
    assert ok


# -- 2. graph convolution -----------------------------------------------------------

def _random_graph(rng, n):
    A = np.triu((rng.random((n, n)) < 0.4).astype(float), 1)
    return A + A.T


def test_criterion_2_gcn():
    start = time.perf_counter()
    fails = []
    # one node: the self-loop normalises to 1, so the layer is act(H W)
    one = gcn.NetworkGraph(1, 0, 0, np.zeros((1, 1)))
    out, _ = gcn.forward(np.array([[2.0, -1.0]]), one, [gcn.GcnLayer(np.array([[1.0], [3.0]]), "relu")])
    if not np.array_equal(out, np.array([[0.0]])):
        fails.append("one-node")
    # two connected nodes: every entry of the operator is 1/2
    two = gcn.NetworkGraph(1, 1, 0, np.array([[0.0, 1.0], [1.0, 0.0]]))
    out, _ = gcn.forward(np.array([[1.0], [3.0]]), two, [gcn.GcnLayer(np.array([[1.0]]), "identity")])
    if not np.array_equal(out, np.array([[2.0], [2.0]])):
        fails.append("two-node")
    rng = derive_rng(0, "acceptance", "gcn")
    for k in range(20):
        n = int(rng.integers(2, 9))
        A = _random_graph(rng, n)
        H = rng.normal(size=(n, 3))
        layers = gcn.init_layers([3, 5, 2], rng)
        perm = rng.permutation(n)
        out, _ = gcn.forward(H, gcn.NetworkGraph(n, 0, 0, A), layers)
        pout, _ = gcn.forward(H[perm], gcn.NetworkGraph(n, 0, 0, A[np.ix_(perm, perm)]), layers)
        if not np.allclose(pout, out[perm], rtol=1e-12, atol=1e-14):
            fails.append(f"equivariance graph {k}")
        graph = gcn.NetworkGraph(n, 0, 0, A)
        out, cache = gcn.forward(H, graph, layers)
        U = rng.normal(size=out.shape)
        grads, dH = gcn.backward(cache, layers, U)

        def loss():
            return float(np.sum(gcn.forward(H, graph, layers)[0] * U))
        for j, layer in enumerate(layers):
            if oracles.relative_error(grads[j], oracles.central_difference(loss, layer.weight), floor=1e-6) > 1e-4:
                fails.append(f"gradient graph {k} layer {j}")
        if oracles.relative_error(dH, oracles.central_difference(loss, H), floor=1e-6) > 1e-4:
            fails.append(f"input gradient graph {k}")
    elapsed = time.perf_counter() - start
    ok = not fails and elapsed < 60
    record_acceptance("2 GCN correctness", ok, f"failures={fails}, {elapsed:.1f}s")
    assert ok


# -- 3. pricing game ----------------------------------------------------------------

def test_criterion_3_stackelberg():
    start = time.perf_counter()
    rng = derive_rng(0, "acceptance", "game")
    fails, worst = [], 0.0
    for k in range(20):
        eta, cap = rng.uniform(1.0, 3.0), 10.0
        c_e, c_c, own = rng.uniform(0.05, 0.3), rng.uniform(0.02, 0.2), rng.uniform(0.2, 2.0)
        spec = GameSpec(eta=[eta], vehicle_cap=[cap], vehicle_edge=[0], vehicle_cloud=[0],
                        edge_cost=[c_e], edge_capacity=[60.0], edge_own=[own], edge_cloud=[0],
                        cloud_cost=[c_c], cloud_capacity=[400.0], price_lo=0.1, price_hi=2.0, grid_points=191)
        out = backward_induction(spec)
        ref = oracles.chain_game_by_grid(eta, cap, c_e, 60.0, own, c_c, 400.0, spec.grid)
        step = spec.grid[1] - spec.grid[0]
        if abs(out.cloud_prices[0] - ref["cloud_price"]) > step + 1e-12 or \
                abs(out.edge_prices[0] - ref["edge_price"]) > step + 1e-12:
            fails.append(f"spec {k} prices {out.edge_prices[0]:.3f}/{out.cloud_prices[0]:.3f} vs "
                         f"{ref['edge_price']:.3f}/{ref['cloud_price']:.3f}")
        rep = verify_se(out, spec)
        worst = max(worst, rep.worst_gain)
        if rep.worst_gain > 1e-6:
            fails.append(f"spec {k} deviation gain {rep.worst_gain:.2e} by {rep.deviator}")
    elapsed = time.perf_counter() - start
    ok = not fails and elapsed < 120
    record_acceptance("3 Stackelberg vs grid search", ok,
                      f"20 specs, worst deviation gain {worst:.2e}, failures={fails}, {elapsed:.1f}s")
    assert ok


# -- 4. learner mechanics -----------------------------------------------------------

def test_criterion_4_learner_mechanics():
    start = time.perf_counter()
    fails = []
    rng = derive_rng(0, "acceptance", "learner")
    r, q = rng.normal(size=(5, 128)), rng.normal(size=(5, 128))
    done = rng.random(128) < 0.2
    y = bellman_target(r, 0.95, q, done[None, :])
    ref = np.array([[r[k, b] if done[b] else r[k, b] + 0.95 * q[k, b] for b in range(128)] for k in range(5)])
    if not np.array_equal(y, ref):
        fails.append("bellman target")
    loss, _, _ = critic_loss(q, y)
    ref_loss = sum(sum((q[k, b] - y[k, b]) ** 2 for b in range(128)) / 128 for k in range(5)) / 5
    if not math.isclose(loss, ref_loss, rel_tol=1e-12):
        fails.append("critic loss averaging")
    online, target = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
    expected = 1e-3 * online + (1 - 1e-3) * target
    soft_update([online], [target], 1e-3)
    if not np.allclose(target, expected, rtol=1e-15, atol=0):
        fails.append("soft update")
    for k in range(10):
        B, emb, adim, sdim = 6, 4, 3, 5
        actor = MLP([emb, 7, adim], 1, rng, out_act="sigmoid")
        critic = MLP([sdim + adim, 8, 1], 5, rng, hidden_act="tanh")
        z, s, w = rng.normal(size=(1, B, emb)), rng.normal(size=(B, sdim)), rng.dirichlet(np.ones(5))
        signs = np.array([1.0, 1.0, -1.0, -1.0, -1.0])

        def objective():
            a = actor(z)[0]
            qv = critic(np.broadcast_to(np.concatenate([s, a], axis=1), (5, B, sdim + adim)).copy())[..., 0]
            return -float((w * signs) @ qv.mean(axis=1))
        a, acache = actor.forward(z)
        _, qcache = critic.forward(np.broadcast_to(np.concatenate([s, a[0]], axis=1), (5, B, sdim + adim)).copy())
        _, din = critic.backward(qcache, actor_output_grad(w, signs, B), params=False)
        grads, _ = actor.backward(acache, din.sum(axis=0)[None, :, sdim:])
        for p, g in zip(actor.params, grads):
            if oracles.relative_error(g, oracles.central_difference(objective, p), floor=1e-6) > 1e-4:
                fails.append(f"actor gradient instance {k}")
    cfg = small_config(**{"learner.warmup": 8, "learner.batch_size": 4,
                          "objective.weights": [1.0, 0.0, 0.0, 0.0, 0.0]})
    mo, single = MultiObjectiveMADDPG(cfg, 0), MADDPG(cfg, 0)
    h_mo, h_single = train(mo, Env(cfg), 3, 0), train(single, Env(cfg), 3, 0)
    l_mo = [h["critic_loss_ux"] for h in h_mo if "critic_loss" in h]
    l_single = [h["critic_loss"] for h in h_single if "critic_loss" in h]
    if not l_single or l_mo != l_single:
        fails.append("one-hot equivalence")
    elapsed = time.perf_counter() - start
    ok = not fails and elapsed < 180
    record_acceptance("4 learner mechanics", ok, f"failures={fails}, {elapsed:.1f}s")
    assert ok


# -- 5. environment integrity -------------------------------------------------------

def _episode(cfg, seed, action_seed, steps):
    env = Env(cfg)
    env.reset(seed)
    rng = np.random.default_rng(action_seed)
    V, J, I = env.n_vehicles, env.n_edges, env.n_clouds
    stream, fails = [], []
    for _ in range(steps):
        act = JointAction(rng.random((V, 4)), rng.random((J, 3)), rng.random((I, 3)))
        _, reward, _, m = env.step(act)
        stream.append(repr((reward.as_array().tolist(), sorted(m.items()))))
        if m["viol_C1"] or m["viol_C2"] or m["viol_C4"]:
            fails.append("masked constraint violated")
        if reward_from_metrics(m, cfg) != reward or scalarize(cfg.objective.weights, reward) != m["reward"]:
            fails.append("reward not recomputable")
    return "\n".join(stream).encode(), fails


def test_criterion_5_environment_integrity():
    start = time.perf_counter()
    cfg = default_config().replace(**{"learner.steps_per_episode": 50})
    fails = []
    for ep in range(10):
        a, fa = _episode(cfg, ep, 100 + ep, 50)
        fails += fa
        if ep < 2:
            b, _ = _episode(cfg, ep, 100 + ep, 50)
            if a != b:
                fails.append(f"replay {ep} differs")
    elapsed = time.perf_counter() - start
    ok = not fails and elapsed < 120
    record_acceptance("5 environment integrity", ok,
                      f"10 random 50-step episodes on the default world, failures={sorted(set(fails))}, {elapsed:.1f}s")
    assert ok


# -- 6. desk-scale learning ---------------------------------------------------------

def moving_average(x, window):
    c = np.cumsum(np.insert(np.asarray(x, float), 0, 0.0))
    return (c[window:] - c[:-window]) / window


@pytest.fixture(scope="module")
def desk_runs():
    cfg = default_config().replace(**DESK)
    runs, start = {}, time.perf_counter()
    for seed in (0, 1, 2):
        env = Env(cfg)
        mo = [h["reward"] for h in train(MultiObjectiveMADDPG(cfg, seed), env, 300, seed)]
        ga = [h["reward"] for h in GeneticSearch(cfg, seed).run(env)]
        runs[seed] = (np.array(mo), np.array(ga))
    return runs, time.perf_counter() - start


def test_criterion_6_beats_genetic_search(desk_runs):
    runs, elapsed = desk_runs
    finals = {s: (mo[-50:].mean(), ga[-50:].mean()) for s, (mo, ga) in runs.items()}
    ok = all(m > g for m, g in finals.values())
    detail = "; ".join(f"seed {s}: MO {m:.3f} vs GA {g:.3f}" for s, (m, g) in finals.items())
    record_acceptance("6a MO-MADDPG final-50 reward above GA on every seed", ok,
                      f"{detail}; {elapsed:.0f}s for both checks (target 1800s)")
    assert ok


@pytest.mark.xfail(strict=True, reason="episode-to-episode scenario noise dominates the learning trend at "
                                       "desk scale; see the decisions ledger")
def test_criterion_6_moving_average_non_decreasing(desk_runs):
    runs, _ = desk_runs
    parts, ok = [], True
    for s, (mo, _) in runs.items():
        ma = moving_average(mo, 50)
        drops = np.diff(ma) < 0
        ok &= not drops.any()
        parts.append(f"seed {s}: {int(drops.sum())}/{len(drops)} drops, MA {ma[0]:.3f} -> {ma[-1]:.3f}")
    record_acceptance("6b MO-MADDPG 50-episode moving average non-decreasing", ok, "; ".join(parts))
    assert ok


# -- 7. task-size sweep -------------------------------------------------------------

def _column(path, name):
    with open(path, newline="", encoding="utf-8") as fh:
        return [float(r[name]) for r in csv.DictReader(fh)]


def test_criterion_7_task_size_sweep(tmp_path):
    start = time.perf_counter()
    cfg = default_config().replace(**{**DESK, "learner.episodes": 5,
                                      "harness.sweeps": {"task_size_mb": [[10, 20], [25, 35], [40, 50]]}})
    run_experiment(cfg, ["random"], [0], str(tmp_path))
    emit_plots_data(str(tmp_path))
    energy = _column(tmp_path / "plots" / "energy_vs_task_size.csv", "energy")
    latency = _column(tmp_path / "plots" / "latency_vs_task_size.csv", "latency")
    elapsed = time.perf_counter() - start
    mono = all(b >= a for a, b in zip(energy, energy[1:])) and all(b >= a for a, b in zip(latency, latency[1:]))
    ok = mono and len(energy) == 3 and elapsed < 300
    record_acceptance("7 EC and latency non-decreasing in task size", ok,
                      f"energy {[round(e, 3) for e in energy]}, latency {[round(x, 3) for x in latency]}, "
                      f"{elapsed:.1f}s")
    assert ok
