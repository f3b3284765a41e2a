"""World state for the three-tier vehicle / edge / cloud network.

Vehicles drive on a one-dimensional ring road. Edge nodes (RSUs) are equally
spaced along it; clouds have no position and are always reachable.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from typing import IO, Iterable, Optional

import numpy as np

from .config import ExperimentConfig

BITS_PER_MB = 8e6


class VtStatus(enum.Enum):
    LOCAL = "local"
    HOSTED_EDGE = "edge"
    HOSTED_CLOUD = "cloud"
    MIGRATING = "migrating"


@dataclass
class VtTaskProfile:
    """A VT task: data volume, per-bit compute demand and deadline."""

    data_volume_bits: float
    compute_demand: float  # cycles per bit
    deadline_s: float
    priority_class: int = 1
    bandwidth_req_hz: float = 0.0

    @property
    def total_cycles(self) -> float:
        return self.compute_demand * self.data_volume_bits

    @property
    def data_mb(self) -> float:
        return self.data_volume_bits / BITS_PER_MB


@dataclass
class Vehicle:
    id: int
    position_m: float
    velocity_mps: float
    tx_power_w: float
    local_cpu_hz: float
    eta: float = 1.0  # satisfaction coefficient in the pricing game
    pending_task: Optional[VtTaskProfile] = None
    vt_status: VtStatus = VtStatus.LOCAL
    vt_host: Optional[int] = None


@dataclass
class EdgeNode:
    id: int
    position_m: float
    coverage_radius_m: float
    cpu_hz: float
    bandwidth_hz: float
    channel_count: int
    switch_capacitance: float
    tx_power_w: float
    load_ratio: float = 0.0
    capacity_units: float = 0.0
    own_units: float = 0.0
    unit_cost: float = 0.0
    cloud_id: int = 0


@dataclass
class CloudServer:
    id: int
    cpu_hz: float
    bandwidth_hz: float
    switch_capacitance: float
    server_count: int
    capacity_units: float = 0.0
    unit_cost: float = 0.0


@dataclass
class World:
    ring_length_m: float
    vehicles: list[Vehicle]
    edges: list[EdgeNode]
    clouds: list[CloudServer]
    time_s: float = 0.0
    rsu_offset_m: float = 10.0
    associations: dict[int, list[int]] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.vehicles) + len(self.edges) + len(self.clouds)


def ring_distance(a: float, b: float, length: float) -> float:
    d = abs(a - b) % length
    return min(d, length - d)


def _uniform(rng: np.random.Generator, r) -> float:
    lo, hi = r
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def sample_task(rng: np.random.Generator, config: ExperimentConfig) -> VtTaskProfile:
    """Draw one VT task; the cycle count is total, so Omega = cycles / bits."""
    w = config.world
    bits = _uniform(rng, w.task_size_mb) * BITS_PER_MB
    cycles = _uniform(rng, w.task_cycles)
    bandwidth = _uniform(rng, w.task_bandwidth_hz)
    priority = int(rng.integers(1, w.priority_classes + 1))
    return VtTaskProfile(
        data_volume_bits=bits,
        compute_demand=cycles / bits,
        deadline_s=config.thresholds.latency_s,
        priority_class=priority,
        bandwidth_req_hz=bandwidth,
    )


def build_world(config: ExperimentConfig, rng: np.random.Generator) -> World:
    w, p = config.world, config.pricing
    kappa = w.switch_capacitance
    level = w.resource_level
    vehicles = []
    for vid in range(w.n_vehicles):
        speed = _uniform(rng, w.speed_kmh) / 3.6
        if w.bidirectional and rng.random() < 0.5:
            speed = -speed
        vehicles.append(Vehicle(
            id=vid,
            position_m=float(rng.uniform(0.0, w.ring_length_m)),
            velocity_mps=speed,
            tx_power_w=_uniform(rng, w.vehicle_tx_power_w),
            local_cpu_hz=_uniform(rng, w.vehicle_cpu_hz),
            eta=_uniform(rng, p.eta_range),
        ))
    spacing = w.ring_length_m / max(w.n_edges, 1)
    edges = []
    for eid in range(w.n_edges):
        # compute power in W is read as kappa * f^2
        power = _uniform(rng, w.edge_compute_power_w)
        edges.append(EdgeNode(
            id=eid,
            position_m=(eid + 0.5) * spacing,
            coverage_radius_m=w.coverage_radius_m,
            cpu_hz=float(np.sqrt(power / kappa)) * level,
            bandwidth_hz=w.edge_bandwidth_hz * level,
            channel_count=w.edge_channels,
            switch_capacitance=kappa,
            tx_power_w=w.edge_tx_power_w,
            capacity_units=p.edge_capacity_units,
            own_units=p.edge_own_units,
            unit_cost=_uniform(rng, p.edge_cost_range),
            cloud_id=eid % w.n_clouds,
        ))
    clouds = []
    for cid in range(w.n_clouds):
        power = _uniform(rng, w.cloud_compute_power_w)
        clouds.append(CloudServer(
            id=cid,
            cpu_hz=float(np.sqrt(power / kappa)) * level,
            bandwidth_hz=w.cloud_bandwidth_hz * level,
            switch_capacitance=kappa,
            server_count=w.cloud_servers,
            capacity_units=p.cloud_capacity_units,
            unit_cost=_uniform(rng, p.cloud_cost_range),
        ))
    world = World(
        ring_length_m=w.ring_length_m,
        vehicles=vehicles,
        edges=edges,
        clouds=clouds,
        rsu_offset_m=w.rsu_offset_m,
    )
    refresh_associations(world)
    return world


def associate(vehicle: Vehicle, world: World) -> tuple[list[int], list[int]]:
    """Edges whose coverage contains the vehicle (nearest first, ties by id), plus all clouds."""
    hits = []
    for e in world.edges:
        d = ring_distance(vehicle.position_m, e.position_m, world.ring_length_m)
        if d <= e.coverage_radius_m:
            hits.append((d, e.id))
    hits.sort()
    return [eid for _, eid in hits], [c.id for c in world.clouds]


def nearest_edge(vehicle: Vehicle, world: World) -> Optional[int]:
    edges, _ = associate(vehicle, world)
    return edges[0] if edges else None


def refresh_associations(world: World) -> None:
    world.associations = {v.id: associate(v, world)[0] for v in world.vehicles}


def step_mobility(world: World, dt_s: float) -> World:
    """Advance every vehicle by ``velocity * dt`` around the ring (in place)."""
    if dt_s <= 0:
        raise ValueError("dt_s must be > 0")
    L = world.ring_length_m
    for v in world.vehicles:
        pos = (v.position_m + v.velocity_mps * dt_s) % L
        # float modulo can return L itself for tiny negative inputs
        v.position_m = 0.0 if pos >= L else pos
    world.time_s += dt_s
    refresh_associations(world)
    return world


def snapshot_records(world: World) -> Iterable[dict]:
    """One flat record per entity, suitable for line-delimited JSON."""
    for v in world.vehicles:
        rec = asdict(v)
        rec["kind"] = "vehicle"
        rec["vt_status"] = v.vt_status.value
        rec["edges_in_range"] = world.associations.get(v.id, [])
        rec["time_s"] = world.time_s
        yield rec
    for e in world.edges:
        rec = asdict(e)
        rec["kind"] = "edge"
        rec["time_s"] = world.time_s
        yield rec
    for c in world.clouds:
        rec = asdict(c)
        rec["kind"] = "cloud"
        rec["time_s"] = world.time_s
        yield rec


def dump_snapshot(world: World, fh: IO[str]) -> int:
    n = 0
    for rec in snapshot_records(world):
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
        n += 1
    return n
