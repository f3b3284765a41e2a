"""Multi-agent environment for VT offloading and migration.

Agents are every vehicle, edge node and cloud. All of them receive the same
five-component team reward ``(ux, utility, latency, energy, cost)``.

Action layout (every component in [0, 1]):

* vehicle: ``[edge_flag, cloud_flag, offload_fraction, qos_class]``. A flag is
  set when above 0.5; if both are set only the larger survives (ties go to the
  edge) and a masking event is counted. An edge request while outside every
  coverage disk is a failed migration and the task runs locally.
* edge: ``[cpu_fraction, forward_fraction, link_split]``. ``forward_fraction``
  of the tasks the edge receives (largest first) are forwarded to its cloud;
  ``link_split`` divides spare bandwidth between the access uplink and the
  backhaul.
* cloud: ``[cpu_fraction, reprice, accept_fraction]``. ``reprice`` above 0.5
  re-solves the pricing game; ``accept_fraction`` of incoming tasks (highest
  priority first) are hosted, the rest bounce back to the edge or the vehicle.

Constraint ids follow the optimisation problem: C1 binary decisions, C2 single
association, C3 compute capacity (and queue stability), C4 bandwidth, C5-C7
latency/energy/cost limits, C8 UX floor, C9 reliability floor, C10 quality
floor. C1, C2 and C4 are enforced by masking and admission; the rest become
reward penalties.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import costs, netlink, stackelberg
from ._rng import derive_rng
from .config import ExperimentConfig
from .gcn import coverage_bitmap
from .netlink import LinkParams, MigrationDecision, QueueState, Route
from .scenario import (VtStatus, VtTaskProfile, World, build_world, ring_distance,
                       sample_task, step_mobility)

VEHICLE_ACT = 4
EDGE_ACT = 3
CLOUD_ACT = 3
N_FEATURES = 16
N_GLOBAL = 19
OBJECTIVES = ("ux", "utility", "latency", "energy", "cost")
SIGNS = np.array([1.0, 1.0, -1.0, -1.0, -1.0])
CONSTRAINTS = tuple(f"C{k}" for k in range(1, 11))


@dataclass(frozen=True)
class RewardVector:
    r_ux: float = 0.0
    r_util: float = 0.0
    r_lat: float = 0.0
    r_en: float = 0.0
    r_cost: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.r_ux, self.r_util, self.r_lat, self.r_en, self.r_cost])


def scalarize(weights: Sequence[float], reward: RewardVector | Sequence[float]) -> float:
    """w1*ux + w2*utility - (w3*latency + w4*energy + w5*cost)."""
    w = [float(x) for x in weights]
    if any(x < 0 for x in w):
        raise ValueError("weights must be >= 0")
    r = reward.as_array().tolist() if isinstance(reward, RewardVector) else [float(x) for x in reward]
    return w[0] * r[0] + w[1] * r[1] - (w[2] * r[2] + w[3] * r[3] + w[4] * r[4])


@dataclass
class JointAction:
    vehicle: np.ndarray
    edge: np.ndarray
    cloud: np.ndarray

    @classmethod
    def idle(cls, n_vehicles: int, n_edges: int, n_clouds: int) -> "JointAction":
        return cls(np.zeros((n_vehicles, VEHICLE_ACT)), np.zeros((n_edges, EDGE_ACT)),
                   np.zeros((n_clouds, CLOUD_ACT)))

    @classmethod
    def from_flat(cls, flat: np.ndarray, n_vehicles: int, n_edges: int, n_clouds: int) -> "JointAction":
        flat = np.asarray(flat, dtype=float)
        a = n_vehicles * VEHICLE_ACT
        b = a + n_edges * EDGE_ACT
        if flat.size != b + n_clouds * CLOUD_ACT:
            raise ValueError("flat action has the wrong length")
        return cls(flat[:a].reshape(n_vehicles, VEHICLE_ACT), flat[a:b].reshape(n_edges, EDGE_ACT),
                   flat[b:].reshape(n_clouds, CLOUD_ACT))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.vehicle.ravel(), self.edge.ravel(), self.cloud.ravel()])


@dataclass
class GlobalState:
    bandwidth_hz: np.ndarray  # per tier: vehicle requests, edge, cloud
    cpu_hz: np.ndarray
    traffic: np.ndarray  # moving-average arrivals per tier: local, edge, cloud
    connectivity: np.ndarray  # (V, J) coverage bitmap
    performance: dict  # step means of energy, ux, latency, cost

    def vector(self, extra: Sequence[float] = ()) -> np.ndarray:
        perf = [self.performance.get(k, 0.0) for k in ("energy", "ux", "latency", "cost")]
        cov = float(self.connectivity.any(axis=1).mean()) if self.connectivity.size else 0.0
        return np.concatenate([self.bandwidth_hz / 1e8, self.cpu_hz / 1e11, self.traffic,
                               [cov], perf, list(extra)])


@dataclass
class LocalStateVehicle:
    priority: int
    velocity_mps: float
    demand_units: float
    cpu_hz: float
    edges_in_range: list
    latency_max: float
    cost_max: float
    quality_min: float
    ux_min: float
    history: list


@dataclass
class LocalStateEdge:
    bandwidth_hz: float
    cpu_hz: float
    cost_max: float
    history: list
    latency_max: float
    hosted: list  # ids of vehicles whose VT is hosted here


@dataclass
class LocalStateCloud:
    cpu_hz: float
    bandwidth_hz: float
    utilization: float
    migration_cost: float
    history: list


@dataclass
class Observation:
    node_features: np.ndarray  # (V+J+I, N_FEATURES)
    coverage: np.ndarray  # (V, J)
    global_vector: np.ndarray  # (N_GLOBAL,)
    global_state: GlobalState


@dataclass
class TaskOutcome:
    vehicle: int
    intent: Route
    route: Route
    offload: float
    latency: float
    energy: costs.EnergyBreakdown
    cost: float
    ux: float
    reliability: float
    quality: float
    success: bool
    bandwidth_hz: float  # requested uplink bandwidth
    server: Optional[str]
    units: float = 0.0

    @property
    def energy_j(self) -> float:
        return self.energy.total


def feasibility_report(world: World, decisions: Sequence[MigrationDecision],
                       outcomes: Sequence[TaskOutcome], server_load: dict,
                       thresholds: costs.Thresholds) -> dict:
    """Satisfied/violated counts for C1-C10 on one executed step.

    ``server_load`` maps "edge:j" / "cloud:i" to the ratio of demanded to
    available cycles; a ratio above one (or an unstable queue, passed as inf)
    violates C3. Threshold constraints are checked on offloaded tasks only.
    """
    tally = {c: {"satisfied": 0, "violated": 0} for c in CONSTRAINTS}

    def mark(c, ok):
        tally[c]["satisfied" if ok else "violated"] += 1

    for d in decisions:
        mark("C1", all(isinstance(x, (bool, np.bool_)) for x in (d.v2e, d.v2c, d.v2e2c)))
        mark("C2", d.n_set <= 1)
    for key in sorted(server_load):
        mark("C3", server_load[key] <= 1.0)
    bw = {f"edge:{e.id}": e.bandwidth_hz for e in world.edges}
    bw.update({f"cloud:{c.id}": c.bandwidth_hz for c in world.clouds})
    req = [0.0] * len(decisions)
    for o in outcomes:
        if o.route is not Route.NONE:
            req[o.vehicle] = o.bandwidth_hz
    bad = netlink.check_channel_constraints(decisions, req, bw)
    n_bad = sum(1 for b in bad if b.kind == "bandwidth")
    tally["C4"]["violated"] += n_bad
    tally["C4"]["satisfied"] += len(bw) - n_bad
    names = {"latency": "C5", "energy": "C6", "cost": "C7", "ux": "C8",
             "reliability": "C9", "quality": "C10"}
    for o in outcomes:
        if o.route is Route.NONE:
            continue
        v = set(costs.check_qos_constraints(o.latency, o.energy_j, o.cost, o.ux,
                                            o.reliability, o.quality, thresholds))
        for name, c in names.items():
            mark(c, name not in v)
    return tally


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class Env:
    """Discrete-time simulator; one step is one ``world.dt_s`` second."""

    def __init__(self, config: ExperimentConfig):
        self.cfg = config
        self.ux_params = costs.ux_params_from(config.ux)
        self.thresholds = costs.thresholds_from(config.thresholds)
        self.steps_per_episode = config.learner.steps_per_episode
        self.world: Optional[World] = None
        self.t = 0

    # -- sizes -----------------------------------------------------------------
    @property
    def n_vehicles(self) -> int:
        return self.cfg.world.n_vehicles

    @property
    def n_edges(self) -> int:
        return self.cfg.world.n_edges

    @property
    def n_clouds(self) -> int:
        return self.cfg.world.n_clouds

    @property
    def n_nodes(self) -> int:
        return self.n_vehicles + self.n_edges + self.n_clouds

    @property
    def action_dims(self) -> tuple[int, int, int]:
        return VEHICLE_ACT, EDGE_ACT, CLOUD_ACT

    # -- lifecycle -------------------------------------------------------------
    def reset(self, seed: int) -> Observation:
        cfg = self.cfg
        self.seed = int(seed)
        self.world = build_world(cfg, derive_rng(seed, "world"))
        self.task_rng = derive_rng(seed, "tasks")
        self.t = 0
        J, I = self.n_edges, self.n_clouds
        self.arrival_rate = np.zeros(I)
        self.backlog = np.zeros(I)
        self.traffic = np.zeros(3)
        self.reliability = {k: deque(maxlen=cfg.objective.reliability_window)
                            for k in [f"edge:{j}" for j in range(J)] + [f"cloud:{i}" for i in range(I)]}
        self.history = {v.id: deque(maxlen=10) for v in self.world.vehicles}
        self.edge_load = np.zeros(J)
        self.cloud_load = np.zeros(I)
        self.node_metrics = np.zeros((self.n_nodes, 5))
        self.last_perf = {"energy": 0.0, "ux": 0.0, "latency": 0.0, "cost": 0.0}
        self.pending_resolve = False
        self._game_cache: dict[bytes, stackelberg.StackelbergOutcome] = {}
        self.game_resolves = 0
        self.game_infeasible = 0
        self.mask_events = 0
        self._draw_tasks()
        self._solve_game()
        return self.observe()

    def _draw_tasks(self) -> None:
        p = self.cfg.world.task_prob
        for v in self.world.vehicles:
            # both draws happen every step so streams stay aligned across task_prob values
            has = self.task_rng.random() < p
            task = sample_task(self.task_rng, self.cfg)
            v.pending_task = task if has else None

    # -- pricing game ----------------------------------------------------------
    def _vehicle_cloud(self, vid: int) -> int:
        edges = self.world.associations.get(vid, [])
        if edges:
            return self.world.edges[edges[0]].cloud_id
        return vid % self.n_clouds

    def game_spec(self) -> stackelberg.GameSpec:
        w, p = self.world, self.cfg.pricing
        ve = [w.associations[v.id][0] if w.associations.get(v.id) else -1 for v in w.vehicles]
        return stackelberg.GameSpec(
            eta=[v.eta for v in w.vehicles],
            vehicle_cap=[p.vehicle_max_units] * len(w.vehicles),
            vehicle_edge=ve,
            vehicle_cloud=[self._vehicle_cloud(v.id) for v in w.vehicles],
            edge_cost=[e.unit_cost for e in w.edges],
            edge_capacity=[e.capacity_units for e in w.edges],
            edge_own=[e.own_units for e in w.edges],
            edge_cloud=[e.cloud_id for e in w.edges],
            cloud_cost=[c.unit_cost for c in w.clouds],
            cloud_capacity=[c.capacity_units for c in w.clouds],
            price_lo=p.price_range[0],
            price_hi=p.price_range[1],
            grid_points=p.price_grid,
            min_units=p.min_service_units,
        )

    def _solve_game(self) -> None:
        spec = self.game_spec()
        # everything except the vehicle-to-seller assignment is fixed within an episode
        key = spec.vehicle_edge.tobytes() + spec.vehicle_cloud.tobytes()
        self.game_resolves += 1
        if key in self._game_cache:
            self.outcome = self._game_cache[key]
            return
        try:
            self.outcome = stackelberg.backward_induction(spec)
        except stackelberg.InfeasibleGame:
            # keep trading at the ceiling price until the market clears
            self.game_infeasible += 1
            hi = spec.price_hi
            self.outcome = stackelberg.evaluate_prices(spec, np.full(spec.n_edges, hi),
                                                       np.full(spec.n_clouds, hi))
        self._game_cache[key] = self.outcome

    # -- step ------------------------------------------------------------------
    def _check_action(self, action: JointAction) -> JointAction:
        shapes = ((self.n_vehicles, VEHICLE_ACT), (self.n_edges, EDGE_ACT), (self.n_clouds, CLOUD_ACT))
        parts = []
        for arr, shape, name in zip((action.vehicle, action.edge, action.cloud), shapes,
                                    ("vehicle", "edge", "cloud")):
            arr = np.asarray(arr, dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} action shape {arr.shape} != {shape}")
            parts.append(np.clip(np.nan_to_num(arr, nan=0.0), 0.0, 1.0))
        return JointAction(*parts)

    def step(self, action: JointAction):
        if self.world is None:
            raise RuntimeError("call reset() first")
        if self.t >= self.steps_per_episode:
            raise RuntimeError("episode is over; call reset()")
        action = self._check_action(action)
        cfg, w = self.cfg, self.world
        ch, pr, obj = cfg.channel, cfg.pricing, cfg.objective
        if self.pending_resolve or (self.n_clouds and np.any(action.cloud[:, 1] > 0.5)):
            self._solve_game()
        self.pending_resolve = False

        V, J, I = self.n_vehicles, self.n_edges, self.n_clouds
        mask_events = 0
        intent: dict[int, Route] = {}
        src_edge: dict[int, Optional[int]] = {}
        dst_cloud: dict[int, int] = {}
        failed: set[int] = set()
        tasks = {v.id: v.pending_task for v in w.vehicles if v.pending_task is not None}

        # vehicle intents
        for vid, task in tasks.items():
            e_flag, c_flag, a_o = action.vehicle[vid, 0], action.vehicle[vid, 1], action.vehicle[vid, 2]
            want_edge, want_cloud = e_flag > 0.5, c_flag > 0.5
            if want_edge and want_cloud:
                mask_events += 1
                want_cloud = c_flag > e_flag
                want_edge = not want_cloud
            if (want_edge or want_cloud) and a_o <= 0.0:
                want_edge = want_cloud = False
            cov = w.associations.get(vid, [])
            if want_edge:
                if not cov:
                    failed.add(vid)
                    intent[vid] = Route.V2E
                    continue
                intent[vid], src_edge[vid] = Route.V2E, cov[0]
            elif want_cloud:
                intent[vid], src_edge[vid] = Route.V2C, None
                dst_cloud[vid] = self._vehicle_cloud(vid)

        # edge forwarding: largest tasks first
        route = {vid: r for vid, r in intent.items() if vid not in failed}
        for j in range(J):
            at_edge = [vid for vid, r in route.items() if r is Route.V2E and src_edge[vid] == j]
            k = _round_half_up(action.edge[j, 1] * len(at_edge))
            at_edge.sort(key=lambda vid: (-tasks[vid].data_volume_bits, vid))
            for vid in at_edge[:k]:
                route[vid] = Route.V2E2C
                dst_cloud[vid] = w.edges[j].cloud_id

        # cloud acceptance: highest priority first
        for i in range(I):
            arriving = [vid for vid, r in route.items()
                        if r in (Route.V2C, Route.V2E2C) and dst_cloud[vid] == i]
            arriving.sort(key=lambda vid: (tasks[vid].priority_class, vid))
            k = _round_half_up(action.cloud[i, 2] * len(arriving))
            for vid in arriving[k:]:
                if route[vid] is Route.V2E2C:
                    route[vid] = Route.V2E
                else:
                    del route[vid]
                    failed.add(vid)

        # bandwidth admission (per server, channel count and system budget)
        used: dict[str, float] = {}
        chans: dict[int, int] = {}
        system_used = 0.0
        for vid in sorted(route, key=lambda v: (tasks[v].priority_class, v)):
            r = route[vid]
            b = tasks[vid].bandwidth_req_hz
            if r is Route.V2C:
                key, cap = f"cloud:{dst_cloud[vid]}", w.clouds[dst_cloud[vid]].bandwidth_hz
                chan_ok = True
            else:
                j = src_edge[vid]
                key, cap = f"edge:{j}", w.edges[j].bandwidth_hz
                chan_ok = chans.get(j, 0) < w.edges[j].channel_count
            if chan_ok and used.get(key, 0.0) + b <= cap and system_used + b <= cfg.world.system_bandwidth_hz:
                used[key] = used.get(key, 0.0) + b
                system_used += b
                if r is not Route.V2C:
                    chans[src_edge[vid]] = chans.get(src_edge[vid], 0) + 1
            else:
                del route[vid]
                failed.add(vid)

        # spare bandwidth shares
        access_bw: dict[int, float] = {}
        backhaul_bw: dict[int, float] = {}
        for j in range(J):
            users = [vid for vid, r in route.items() if r is not Route.V2C and src_edge[vid] == j]
            fwd = [vid for vid in users if route[vid] is Route.V2E2C]
            spare = max(w.edges[j].bandwidth_hz - used.get(f"edge:{j}", 0.0), 0.0)
            split = action.edge[j, 2]
            for vid in users:
                access_bw[vid] = tasks[vid].bandwidth_req_hz + split * spare / len(users)
            for vid in fwd:
                backhaul_bw[vid] = (ch.backhaul_bandwidth_hz + (1.0 - split) * spare) / len(fwd)
        for i in range(I):
            users = [vid for vid, r in route.items() if r is Route.V2C and dst_cloud[vid] == i]
            spare = max(w.clouds[i].bandwidth_hz - used.get(f"cloud:{i}", 0.0), 0.0)
            for vid in users:
                access_bw[vid] = tasks[vid].bandwidth_req_hz + spare / len(users)

        # compute allocation
        edge_cpu = np.array([e.cpu_hz for e in w.edges]) * (0.1 + 0.9 * action.edge[:, 0]) if J else np.zeros(0)
        cloud_cpu = np.array([c.cpu_hz for c in w.clouds]) * (0.1 + 0.9 * action.cloud[:, 0])
        offload = {vid: float(action.vehicle[vid, 2]) for vid in route}
        share: dict[int, float] = {}
        edge_cycles = np.zeros(J)
        for j in range(J):
            here = [vid for vid, r in route.items() if r is Route.V2E and src_edge[vid] == j]
            wsum = sum(1.0 / tasks[vid].priority_class for vid in here)
            for vid in here:
                share[vid] = edge_cpu[j] * (1.0 / tasks[vid].priority_class) / wsum
                edge_cycles[j] += offload[vid] * tasks[vid].total_cycles

        # cloud queues
        s = cfg.world.cloud_servers
        alpha = 2.0 / (obj.traffic_window + 1.0)
        queue_delay: dict[int, float] = {}
        cloud_cycles = np.zeros(I)
        unstable = np.zeros(I, dtype=bool)
        f_server = cloud_cpu / s
        for i in range(I):
            arriving = [vid for vid, r in route.items()
                        if r in (Route.V2C, Route.V2E2C) and dst_cloud[vid] == i]
            arriving.sort(key=lambda vid: (tasks[vid].priority_class, vid))
            cyc = [offload[vid] * tasks[vid].total_cycles for vid in arriving]
            cloud_cycles[i] = sum(cyc)
            mean_cycles = (cloud_cycles[i] / len(arriving)) if arriving else float(np.mean(cfg.world.task_cycles))
            mu = f_server[i] / mean_cycles
            self.arrival_rate[i] += alpha * (len(arriving) / cfg.world.dt_s - self.arrival_rate[i])
            lam = self.arrival_rate[i]
            if lam >= s * mu:
                unstable[i] = True
                lam = 0.99 * s * mu
            for rank, vid in enumerate(arriving):
                q = QueueState(lam, mu, s, self.backlog[i] + rank, float(tasks[vid].priority_class))
                queue_delay[vid] = netlink.queue_delay(q)
            self.backlog[i] = max(0.0, self.backlog[i] + len(arriving) - s * mu * cfg.world.dt_s)

        # per-task physics
        outcomes: list[TaskOutcome] = []
        decisions = [MigrationDecision() for _ in range(V)]
        served_util = np.zeros(V + J + I)
        per_node = [[] for _ in range(V + J + I)]
        utility_total = 0.0
        theta_hi = pr.price_range[1]
        K = cfg.world.priority_classes
        for vid in sorted(tasks):
            task = tasks[vid]
            veh = w.vehicles[vid]
            local_full = task.total_cycles / veh.local_cpu_hz
            r = route.get(vid, Route.NONE)
            if r is Route.NONE:
                outcomes.append(TaskOutcome(vid, intent.get(vid, Route.NONE), r, 0.0, local_full,
                                            costs.EnergyBreakdown(), 0.0, 0.0, 0.0, 0.0, False, 0.0, None))
                continue
            a_o = offload[vid]
            part = VtTaskProfile(task.data_volume_bits * a_o, task.compute_demand, task.deadline_s,
                                 task.priority_class, task.bandwidth_req_hz)
            if r is Route.V2C:
                i = dst_cloud[vid]
                dist = ch.vehicle_cloud_distance_m
                j = None
            else:
                j = src_edge[vid]
                i = dst_cloud.get(vid)
                d = ring_distance(veh.position_m, w.edges[j].position_m, w.ring_length_m)
                dist = math.hypot(d, w.rsu_offset_m)
            up = LinkParams(access_bw[vid], veh.tx_power_w, ch.gain, dist, ch.pathloss_exp, ch.noise)
            rate = netlink.shannon_rate(up)
            comps = {"tx": netlink.tx_latency(part, rate)}
            inputs = dict(vehicle_power_w=veh.tx_power_w, uplink_rate=rate)
            if r is Route.V2E:
                comps["exec"] = netlink.exec_latency(part, share[vid])
                inputs.update(src_switch_cap=w.edges[j].switch_capacitance, src_cpu_hz=share[vid])
                server = f"edge:{j}"
            else:
                comps["queue"] = queue_delay[vid]
                comps["reinst"] = netlink.reinstantiation_delay(part, f_server[i])
                inputs.update(dst_switch_cap=w.clouds[i].switch_capacitance, dst_cpu_hz=f_server[i])
                server = f"cloud:{i}"
            if r is Route.V2E2C:
                bh = LinkParams(backhaul_bw[vid], w.edges[j].tx_power_w, ch.gain, ch.backhaul_distance_m,
                                ch.backhaul_pathloss_exp, ch.noise)
                bh_rate = netlink.shannon_rate(bh)
                comps["mig"] = netlink.tx_latency(part, bh_rate)
                inputs.update(edge_power_w=w.edges[j].tx_power_w, backhaul_rate=bh_rate)
            offload_latency = netlink.total_latency(r, comps)
            latency = max((1.0 - a_o) * local_full, offload_latency)
            en = costs.energy(r, part, costs.EnergyInputs(**inputs), times_cycles=obj.energy_times_cycles)

            # pricing: vehicles pay the seller they contract with
            if r is Route.V2C:
                price = float(self.outcome.cloud_prices[i])
            else:
                price = float(self.outcome.edge_prices[j])
            premium = 1.0 + pr.priority_premium * (K - task.priority_class)
            unit_price = price * premium if pr.mode == "per_mb" else price * premium * pr.cycle_price_scale
            cost = costs.migration_cost(part, unit_price, mode=pr.mode)

            units = stackelberg.follower_best_response(veh.eta, price, pr.vehicle_max_units,
                                                       pr.min_service_units)
            u_v = float(stackelberg.follower_utility(veh.eta, units, price))
            if r is Route.V2E:
                u_seller = {V + j: (price - w.edges[j].unit_cost) * units}
            elif r is Route.V2E2C:
                theta_i = float(self.outcome.cloud_prices[i])
                u_seller = {V + j: (price - theta_i) * units,
                            V + J + i: (theta_i - w.clouds[i].unit_cost) * units}
            else:
                u_seller = {V + J + i: (price - w.clouds[i].unit_cost) * units}
            served_util[vid] += u_v
            utility_total += u_v
            for node, u in u_seller.items():
                served_util[node] += u
                utility_total += u

            rel_hist = self.reliability[server]
            reliability = (sum(rel_hist) / len(rel_hist)) if rel_hist else 1.0
            met = [latency <= self.thresholds.latency_max, en.total <= self.thresholds.energy_max,
                   cost <= self.thresholds.cost_max]
            quality = sum(met) / 3.0
            rating = costs.ux_rating(latency, quality, reliability, self.ux_params)
            d = MigrationDecision.for_route(r, source_edge=j, destination=i if r is not Route.V2E else j)
            decisions[vid] = d
            ux = costs.vehicle_ux([rating], d)
            success = latency <= self.thresholds.latency_max
            outcomes.append(TaskOutcome(vid, intent[vid], r, a_o, latency, en, cost, ux, reliability,
                                        quality, success, task.bandwidth_req_hz, server, units))
            nodes = [vid, V + J + i] if r is Route.V2C else [vid, V + j] + ([V + J + i] if i is not None else [])
            for n in nodes:
                per_node[n].append(len(outcomes) - 1)

        # server loads (C3)
        load: dict[str, float] = {}
        for j in range(J):
            load[f"edge:{j}"] = edge_cycles[j] / (edge_cpu[j] * cfg.world.dt_s)
        for i in range(I):
            ratio = cloud_cycles[i] / (cloud_cpu[i] * cfg.world.dt_s)
            load[f"cloud:{i}"] = math.inf if unstable[i] else ratio
        self.edge_load = edge_cycles / (edge_cpu * cfg.world.dt_s) if J else np.zeros(0)
        self.cloud_load = cloud_cycles / (cloud_cpu * cfg.world.dt_s)
        for e, lr in zip(w.edges, self.edge_load):
            e.load_ratio = float(lr)

        tally = feasibility_report(w, decisions, outcomes, load, self.thresholds)
        reward, metrics = self._reward(outcomes, load, unstable, utility_total)
        metrics["mask_events"] = float(mask_events)
        self.mask_events += mask_events
        for c in CONSTRAINTS:
            metrics[f"viol_{c}"] = float(tally[c]["violated"])
        attempts = len(intent)
        successes = sum(1 for o in outcomes if o.success)
        metrics["migration_attempts"] = float(attempts)
        metrics["migration_successes"] = float(successes)
        metrics["migration_success_rate"] = successes / attempts if attempts else 0.0
        metrics["migration_failures"] = float(len(failed))

        # bookkeeping for the next observation
        for o in outcomes:
            if o.server is not None:
                self.reliability[o.server].append(1.0 if o.success else 0.0)
            self.history[o.vehicle].append(o.latency)
            veh = w.vehicles[o.vehicle]
            if o.route is Route.V2E:
                veh.vt_status, veh.vt_host = VtStatus.HOSTED_EDGE, src_edge[o.vehicle]
            elif o.route in (Route.V2C, Route.V2E2C):
                veh.vt_status, veh.vt_host = VtStatus.HOSTED_CLOUD, dst_cloud[o.vehicle]
            else:
                veh.vt_status, veh.vt_host = VtStatus.LOCAL, None
        n_local = sum(1 for o in outcomes if o.route is Route.NONE)
        n_edge = sum(1 for o in outcomes if o.route is Route.V2E)
        counts = np.array([n_local, n_edge, len(outcomes) - n_local - n_edge], dtype=float)
        self.traffic += alpha * (counts - self.traffic)
        self._update_node_metrics(outcomes, per_node, served_util)
        self.last_perf = {k: metrics[k] for k in ("energy", "ux", "latency", "cost")}

        step_mobility(w, cfg.world.dt_s)
        triggered = bool(np.any(self.edge_load > obj.overload_ratio))
        for v in w.vehicles:
            if v.vt_status is VtStatus.HOSTED_EDGE and v.vt_host not in w.associations.get(v.id, []):
                triggered = True
                v.vt_status = VtStatus.MIGRATING
        self.pending_resolve = triggered
        metrics["migration_trigger"] = float(triggered)
        metrics["game_resolves"] = float(self.game_resolves)
        self._draw_tasks()
        self.t += 1
        done = self.t >= self.steps_per_episode
        self.last_outcomes = outcomes
        self.last_decisions = decisions
        self.last_tally = tally
        return self.observe(), reward, done, metrics

    def _reward(self, outcomes, load, unstable, utility_total):
        cfg = self.cfg
        t, pen = self.thresholds, cfg.objective.penalty
        n = max(len(outcomes), 1)
        sums = dict.fromkeys(("ux", "latency", "energy", "cost", "pen_ux", "pen_lat", "pen_en", "pen_cost",
                              "e_vehicle", "e_edge", "e_cloud"), 0.0)
        for o in outcomes:
            sums["ux"] += o.ux
            sums["latency"] += o.latency
            sums["energy"] += o.energy_j
            sums["cost"] += o.cost
            sums["e_vehicle"] += o.energy.upload_j
            sums["e_edge"] += o.energy.exec_src + o.energy.migrate
            sums["e_cloud"] += o.energy.exec_dst
            if o.route is Route.NONE:
                continue
            m = costs.violation_magnitudes(o.latency, o.energy_j, o.cost, o.ux, o.reliability, o.quality, t)
            sums["pen_lat"] += m["latency"]
            sums["pen_en"] += m["energy"]
            sums["pen_cost"] += m["cost"]
            sums["pen_ux"] += m["ux"] + m["reliability"] + m["quality"]
        overload = sum(max(0.0, r - 1.0) if math.isfinite(r) else 1.0 for r in load.values())
        sums["pen_lat"] += overload

        metrics = {
            "n_tasks": float(len(outcomes)),
            "n_offloaded": float(sum(1 for o in outcomes if o.route is not Route.NONE)),
            "ux": sums["ux"] / n,
            "utility": utility_total,
            "latency": sums["latency"] / n,
            "energy": sums["energy"] / n,
            "cost": sums["cost"] / n,
            "energy_vehicle": sums["e_vehicle"] / n,
            "energy_edge": sums["e_edge"] / n,
            "energy_cloud": sums["e_cloud"] / n,
            "penalty_ux": pen * sums["pen_ux"] / n,
            "penalty_latency": pen * sums["pen_lat"] / n,
            "penalty_energy": pen * sums["pen_en"] / n,
            "penalty_cost": pen * sums["pen_cost"] / n,
        }
        reward = reward_from_metrics(metrics, cfg)
        for name, val in zip(OBJECTIVES, reward.as_array()):
            metrics[f"r_{name}"] = float(val)
        metrics["reward"] = scalarize(cfg.objective.weights, reward)
        return reward, metrics

    def _update_node_metrics(self, outcomes, per_node, served_util) -> None:
        m = np.zeros((self.n_nodes, 5))
        m[:, 1] = served_util
        for node, idx in enumerate(per_node):
            if not idx:
                continue
            sel = [outcomes[k] for k in idx]
            m[node, 0] = sum(o.ux for o in sel) / len(sel)
            m[node, 2] = sum(o.latency for o in sel) / len(sel)
            m[node, 3] = sum(o.energy_j for o in sel) / len(sel)
            m[node, 4] = sum(o.cost for o in sel) / len(sel)
        for o in outcomes:
            if o.route is Route.NONE:
                m[o.vehicle, 2] = o.latency
        self.node_metrics = m

    # -- observation -----------------------------------------------------------
    def observe(self) -> Observation:
        cfg, w = self.cfg, self.world
        V, J, I = self.n_vehicles, self.n_edges, self.n_clouds
        theta_hi = cfg.pricing.price_range[1]
        X = np.zeros((V + J + I, N_FEATURES))
        X[:, :5] = self.node_metrics
        cov = coverage_bitmap(w)
        for v in w.vehicles:
            task = v.pending_task
            edges = w.associations.get(v.id, [])
            near = (ring_distance(v.position_m, w.edges[edges[0]].position_m, w.ring_length_m)
                    / cfg.world.coverage_radius_m) if edges else 1.0
            price = (self.outcome.edge_prices[edges[0]] if edges
                     else self.outcome.cloud_prices[self._vehicle_cloud(v.id)])
            X[v.id, 5:13] = [
                task.data_mb / 50.0 if task else 0.0,
                task.total_cycles / 1.6e9 if task else 0.0,
                task.priority_class / cfg.world.priority_classes if task else 0.0,
                v.velocity_mps / 30.0,
                v.local_cpu_hz / 1e9,
                1.0 if edges else 0.0,
                near,
                price / theta_hi,
            ]
            X[v.id, 13] = 1.0
        for e in w.edges:
            key = f"edge:{e.id}"
            rel = self.reliability[key]
            X[V + e.id, 5:13] = [
                e.cpu_hz / 2e10, e.bandwidth_hz / 2e7, self.edge_load[e.id], cov[:, e.id].sum() / max(V, 1),
                (sum(rel) / len(rel)) if rel else 1.0, self.outcome.edge_prices[e.id] / theta_hi,
                e.unit_cost / theta_hi, self.outcome.edge_demands[e.id] / max(e.capacity_units, 1.0),
            ]
            X[V + e.id, 14] = 1.0
        for c in w.clouds:
            key = f"cloud:{c.id}"
            rel = self.reliability[key]
            X[V + J + c.id, 5:13] = [
                c.cpu_hz / 4e10, c.bandwidth_hz / 1e8, min(self.cloud_load[c.id], 10.0), self.backlog[c.id] / 10.0,
                (sum(rel) / len(rel)) if rel else 1.0, self.outcome.cloud_prices[c.id] / theta_hi,
                c.unit_cost / theta_hi, self.arrival_rate[c.id] / 10.0,
            ]
            X[V + J + c.id, 15] = 1.0
        gs = GlobalState(
            bandwidth_hz=np.array([sum(v.pending_task.bandwidth_req_hz for v in w.vehicles if v.pending_task),
                                   sum(e.bandwidth_hz for e in w.edges), sum(c.bandwidth_hz for c in w.clouds)]),
            cpu_hz=np.array([sum(v.local_cpu_hz for v in w.vehicles), sum(e.cpu_hz for e in w.edges),
                             sum(c.cpu_hz for c in w.clouds)]),
            traffic=self.traffic.copy(),
            connectivity=cov,
            performance=dict(self.last_perf),
        )
        extra = [self.t / self.steps_per_episode,
                 float(self.edge_load.mean()) if J else 0.0,
                 float(np.minimum(self.cloud_load, 10.0).mean()),
                 float(np.mean(self.outcome.edge_prices)) / theta_hi if J else 0.0,
                 float(np.mean(self.outcome.cloud_prices)) / theta_hi]
        vec = gs.vector(extra)
        return Observation(X, cov, vec, gs)

    def local_states(self) -> tuple[list, list, list]:
        cfg, w = self.cfg, self.world
        t = cfg.thresholds
        vs = []
        for v in w.vehicles:
            vs.append(LocalStateVehicle(
                priority=v.pending_task.priority_class if v.pending_task else 0,
                velocity_mps=v.velocity_mps,
                demand_units=float(self.outcome.demands[v.id]),
                cpu_hz=v.local_cpu_hz,
                edges_in_range=list(w.associations.get(v.id, [])),
                latency_max=t.latency_s, cost_max=t.cost, quality_min=t.quality_min, ux_min=t.ux_min,
                history=list(self.history[v.id]),
            ))
        es = [LocalStateEdge(e.bandwidth_hz, e.cpu_hz, t.cost, list(self.reliability[f"edge:{e.id}"]),
                             t.latency_s,
                             [v.id for v in w.vehicles if v.vt_status is VtStatus.HOSTED_EDGE and v.vt_host == e.id])
              for e in w.edges]
        cs = [LocalStateCloud(c.cpu_hz, c.bandwidth_hz, float(self.cloud_load[c.id]),
                              float(self.outcome.cloud_prices[c.id]), list(self.reliability[f"cloud:{c.id}"]))
              for c in w.clouds]
        return vs, es, cs


def reward_from_metrics(m: dict, cfg: ExperimentConfig) -> RewardVector:
    """Per-objective rewards from the step's logged means and penalties."""
    t = cfg.thresholds
    n = max(m["n_tasks"], 1.0)
    return RewardVector(
        r_ux=m["ux"] - m["penalty_ux"],
        r_util=m["utility"] / (n * cfg.objective.utility_scale),
        r_lat=m["latency"] / t.latency_s + m["penalty_latency"],
        r_en=m["energy"] / t.energy_j + m["penalty_energy"],
        r_cost=m["cost"] / t.cost + m["penalty_cost"],
    )


def reset(config: ExperimentConfig, seed: int):
    """Functional entry point: a fresh env plus its world, global state and local states."""
    env = Env(config)
    obs = env.reset(seed)
    return env, env.world, obs.global_state, env.local_states()
