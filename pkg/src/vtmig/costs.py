"""Energy, migration-cost and user-experience models."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .netlink import MigrationDecision, Route
from .scenario import BITS_PER_MB, VtTaskProfile


@dataclass(frozen=True)
class EnergyBreakdown:
    upload_j: float = 0.0
    exec_src: float = 0.0
    migrate: float = 0.0
    exec_dst: float = 0.0

    @property
    def total(self) -> float:
        return self.upload_j + self.exec_src + self.migrate + self.exec_dst


@dataclass(frozen=True)
class UxParams:
    w_l: float = 1 / 3
    w_q: float = 1 / 3
    w_r: float = 1 / 3
    a_l: float = 1.0
    b_l: float = 1.0
    a_q: float = 1.0
    b_q: float = 1.0
    a_r: float = 1.0
    b_r: float = 1.0

    @property
    def ceiling(self) -> float:
        return self.w_l * self.a_l + self.w_q * self.a_q + self.w_r * self.a_r


@dataclass(frozen=True)
class Thresholds:
    latency_max: float = math.inf
    energy_max: float = math.inf
    cost_max: float = math.inf
    ux_min: float = -math.inf
    reliability_min: float = -math.inf
    quality_min: float = -math.inf


@dataclass(frozen=True)
class EnergyInputs:
    """Per-task physical quantities the energy model needs."""

    vehicle_power_w: float
    uplink_rate: float
    src_switch_cap: float = 0.0
    src_cpu_hz: float = 0.0
    edge_power_w: float = 0.0
    backhaul_rate: float = 0.0
    dst_switch_cap: float = 0.0
    dst_cpu_hz: float = 0.0


def energy(decision: MigrationDecision | Route, task: VtTaskProfile | float,
           inputs: EnergyInputs, *, times_cycles: bool = False) -> EnergyBreakdown:
    """Route-active energy terms.

    Execution energy is kappa * f^2 per task; with ``times_cycles`` it is
    multiplied by the task's cycle count (the conventional dynamic-power form).
    A float ``task`` is read as a data volume in bits with no cycle count.
    """
    route = decision.route if isinstance(decision, MigrationDecision) else decision
    if route is Route.NONE:
        return EnergyBreakdown()
    if isinstance(task, VtTaskProfile):
        bits, cycles = task.data_volume_bits, task.total_cycles
    else:
        bits, cycles = float(task), 0.0
    scale = cycles if times_cycles else 1.0

    if inputs.uplink_rate <= 0:
        raise ValueError("uplink rate must be > 0 on an active route")
    upload = inputs.vehicle_power_w * bits / inputs.uplink_rate
    exec_src = migrate = exec_dst = 0.0
    if route is Route.V2E:
        exec_src = inputs.src_switch_cap * inputs.src_cpu_hz ** 2 * scale
    else:
        exec_dst = inputs.dst_switch_cap * inputs.dst_cpu_hz ** 2 * scale
    if route is Route.V2E2C:
        if inputs.backhaul_rate <= 0:
            raise ValueError("backhaul rate must be > 0 on an active route")
        migrate = inputs.edge_power_w * bits / inputs.backhaul_rate
    return EnergyBreakdown(upload, exec_src, migrate, exec_dst)


def migration_cost(task: VtTaskProfile, price: float, *, mode: str = "per_mb") -> float:
    """Resource quantity times the destination's unit price."""
    if price < 0:
        raise ValueError("price must be >= 0")
    if mode == "per_mb":
        return task.data_volume_bits / BITS_PER_MB * price
    if mode == "per_cycle":
        return task.total_cycles * price
    raise ValueError(f"unknown pricing mode {mode!r}")


def ux_rating(latency: float, quality: float, reliability: float, p: UxParams) -> float:
    """Weighted experience score: exponential latency decay plus saturating quality and reliability."""
    if latency < 0 or quality < 0 or reliability < 0:
        raise ValueError("latency, quality and reliability must be >= 0")
    f_l = p.a_l * math.exp(-p.b_l * latency)
    f_q = p.a_q * (1.0 - math.exp(-p.b_q * quality))
    f_r = p.a_r * (1.0 - math.exp(-p.b_r * reliability))
    return p.w_l * f_l + p.w_q * f_q + p.w_r * f_r


def vehicle_ux(ratings: Sequence[float], decision: MigrationDecision | bool) -> float:
    active = decision.active if isinstance(decision, MigrationDecision) else bool(decision)
    if not active:
        return 0.0
    if len(ratings) == 0:
        raise ValueError("an active decision needs at least one rating")
    return sum(ratings) / len(ratings)


QOS_ORDER = ("latency", "energy", "cost", "ux", "reliability", "quality")


def check_qos_constraints(latency: float, energy_j: float, cost: float, ux: float,
                          reliability: float, quality: float,
                          t: Thresholds) -> list[str]:
    """Names of violated thresholds in a fixed order; bounds are inclusive."""
    bad = {
        "latency": latency > t.latency_max,
        "energy": energy_j > t.energy_max,
        "cost": cost > t.cost_max,
        "ux": ux < t.ux_min,
        "reliability": reliability < t.reliability_min,
        "quality": quality < t.quality_min,
    }
    return [name for name in QOS_ORDER if bad[name]]


def violation_magnitudes(latency: float, energy_j: float, cost: float, ux: float,
                         reliability: float, quality: float,
                         t: Thresholds) -> dict[str, float]:
    """Normalised excess over each threshold (0 when satisfied)."""

    def over(x, lim):
        return max(0.0, x / lim - 1.0) if math.isfinite(lim) else 0.0

    def under(x, lim):
        if not math.isfinite(lim):
            return 0.0
        return max(0.0, (lim - x) / lim) if lim > 0 else max(0.0, lim - x)

    return {
        "latency": over(latency, t.latency_max),
        "energy": over(energy_j, t.energy_max),
        "cost": over(cost, t.cost_max),
        "ux": under(ux, t.ux_min),
        "reliability": under(reliability, t.reliability_min),
        "quality": under(quality, t.quality_min),
    }


def ux_params_from(cfg) -> UxParams:
    w = cfg.weights
    return UxParams(w[0], w[1], w[2], cfg.a_l, cfg.b_l, cfg.a_q, cfg.b_q, cfg.a_r, cfg.b_r)


def thresholds_from(cfg) -> Thresholds:
    return Thresholds(cfg.latency_s, cfg.energy_j, cfg.cost, cfg.ux_min,
                      cfg.reliability_min, cfg.quality_min)
