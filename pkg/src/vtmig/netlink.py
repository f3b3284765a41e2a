"""Communication and delay models.

All functions are pure and operate on plain numbers, so they can be reused by
the environment, the tests and the oracles alike.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .scenario import VtTaskProfile


class UnstableQueueError(ValueError):
    """Arrival rate reaches the aggregate service rate."""


class Route(enum.Enum):
    NONE = "none"
    V2E = "v->j"
    V2C = "v->i"
    V2E2C = "v->j->i"


# which latency terms each route pays
ROUTE_TERMS = {
    Route.NONE: (),
    Route.V2E: ("tx", "exec"),
    Route.V2C: ("tx", "queue", "reinst"),
    Route.V2E2C: ("tx", "mig", "queue", "reinst"),
}
LATENCY_TERMS = ("tx", "exec", "mig", "queue", "reinst")


@dataclass(frozen=True)
class LinkParams:
    bandwidth_hz: float
    tx_power_w: float
    channel_gain: float
    distance_m: float
    pathloss_exp: float
    noise_psd: float

    def __post_init__(self):
        for name in ("bandwidth_hz", "tx_power_w", "channel_gain", "distance_m",
                     "pathloss_exp", "noise_psd"):
            if not getattr(self, name) > 0:
                raise ValueError(f"LinkParams.{name} must be > 0")

    @property
    def snr(self) -> float:
        return self.tx_power_w * self.channel_gain * self.distance_m ** (-self.pathloss_exp) / self.noise_psd


@dataclass
class MigrationDecision:
    """One-hot routing flags for one vehicle."""

    v2e: bool = False
    v2c: bool = False
    v2e2c: bool = False
    source_edge: Optional[int] = None
    destination: Optional[int] = None

    @classmethod
    def for_route(cls, route: Route, source_edge=None, destination=None) -> "MigrationDecision":
        return cls(v2e=route is Route.V2E, v2c=route is Route.V2C, v2e2c=route is Route.V2E2C,
                   source_edge=source_edge, destination=destination)

    @property
    def n_set(self) -> int:
        return int(self.v2e) + int(self.v2c) + int(self.v2e2c)

    @property
    def active(self) -> bool:
        return self.n_set > 0

    @property
    def route(self) -> Route:
        if self.n_set > 1:
            raise ValueError("decision has more than one flag set")
        if self.v2e:
            return Route.V2E
        if self.v2c:
            return Route.V2C
        if self.v2e2c:
            return Route.V2E2C
        return Route.NONE


@dataclass(frozen=True)
class QueueState:
    arrival_rate: float
    service_rate: float
    servers: int
    queue_length: float
    priority_weight: float = 1.0


def shannon_rate(p: LinkParams) -> float:
    """Achievable rate b * log2(1 + SNR) in bit/s."""
    return p.bandwidth_hz * math.log2(1.0 + p.snr)


def tx_latency(task: VtTaskProfile | float, rate: float) -> float:
    if rate <= 0:
        raise ValueError("rate must be > 0")
    bits = task.data_volume_bits if isinstance(task, VtTaskProfile) else float(task)
    return bits / rate


def exec_latency(task: VtTaskProfile | float, cpu_hz: float) -> float:
    """Total cycles over the allocated frequency; a float ``task`` is a cycle count."""
    if cpu_hz <= 0:
        raise ValueError("cpu_hz must be > 0")
    cycles = task.total_cycles if isinstance(task, VtTaskProfile) else float(task)
    return cycles / cpu_hz


def queue_delay(q: QueueState) -> float:
    """rho * Lq / (mu * (s*mu - lambda)); zero for an empty queue."""
    capacity = q.servers * q.service_rate
    if q.arrival_rate >= capacity:
        raise UnstableQueueError(
            f"arrival rate {q.arrival_rate} >= service capacity {capacity}")
    if q.queue_length == 0:
        return 0.0
    return q.priority_weight * q.queue_length / (q.service_rate * (capacity - q.arrival_rate))


def reinstantiation_delay(task: VtTaskProfile | float, dest_cpu_hz: float) -> float:
    """Restart delay at the destination, with the same total-cycle reading as exec_latency."""
    if dest_cpu_hz <= 0:
        raise ValueError("dest_cpu_hz must be > 0")
    cycles = task.total_cycles if isinstance(task, VtTaskProfile) else float(task)
    return cycles / dest_cpu_hz


def total_latency(decision: MigrationDecision | Route, components: Mapping[str, float]) -> float:
    """Sum of the latency terms the active route pays; other terms are ignored."""
    route = decision.route if isinstance(decision, MigrationDecision) else decision
    if route is Route.NONE:
        raise ValueError("no active route")
    total = 0.0
    for term in ROUTE_TERMS[route]:
        total += components.get(term, 0.0)
    return total


@dataclass(frozen=True)
class ChannelViolation:
    kind: str  # "association" or "bandwidth"
    subject: str
    amount: float


def check_channel_constraints(
    decisions: Sequence[MigrationDecision],
    bandwidth_req: Sequence[float],
    server_bandwidth: Mapping[str, float],
) -> list[ChannelViolation]:
    """Single-association and per-server bandwidth checks.

    ``server_bandwidth`` maps server keys ("edge:3", "cloud:0") to their
    bandwidth. The uplink of v->j and v->j->i lands on the source edge, v->i on
    the cloud.
    """
    out: list[ChannelViolation] = []
    load: dict[str, float] = {}
    for vid, (d, b) in enumerate(zip(decisions, bandwidth_req)):
        if d.n_set > 1:
            out.append(ChannelViolation("association", f"vehicle:{vid}", float(d.n_set - 1)))
            continue
        if not d.active:
            continue
        key = f"cloud:{d.destination}" if d.v2c else f"edge:{d.source_edge}"
        load[key] = load.get(key, 0.0) + b
    for key in sorted(load):
        cap = server_bandwidth.get(key, 0.0)
        if load[key] > cap:
            out.append(ChannelViolation("bandwidth", key, load[key] - cap))
    return out
