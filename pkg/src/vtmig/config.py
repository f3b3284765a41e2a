"""Experiment configuration: schema, defaults and YAML loading.

Every field has a default, so an empty file yields the full default
configuration (100 vehicles, 10 edge nodes, 3 clouds, 3000 x 100 training).
Unknown keys are rejected so that typos surface immediately.

Example::

    world:
      n_vehicles: 10
      n_edges: 3
      n_clouds: 1
    learner:
      episodes: 300
      steps_per_episode: 50
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml


class ConfigError(ValueError):
    """Raised for a missing file, a schema violation or an out-of-range value."""


Range = tuple  # (lo, hi)


@dataclass
class WorldConfig:
    n_vehicles: int = 100
    n_edges: int = 10
    n_clouds: int = 3
    ring_length_m: float = 10_000.0
    coverage_radius_m: float = 500.0
    rsu_offset_m: float = 10.0
    speed_kmh: Range = (36.0, 108.0)
    bidirectional: bool = True
    vehicle_tx_power_w: Range = (0.1, 0.3)
    vehicle_cpu_hz: Range = (0.5e9, 1.0e9)
    task_prob: float = 1.0
    task_size_mb: Range = (10.0, 50.0)
    task_cycles: Range = (0.6e9, 1.6e9)
    task_bandwidth_hz: Range = (1e6, 5e6)
    priority_classes: int = 3
    edge_compute_power_w: Range = (10.0, 50.0)
    cloud_compute_power_w: Range = (50.0, 200.0)
    edge_bandwidth_hz: float = 20e6
    cloud_bandwidth_hz: float = 100e6
    system_bandwidth_hz: float = 60e6
    edge_channels: int = 8
    edge_tx_power_w: float = 10.0
    switch_capacitance: float = 1e-28
    cloud_servers: int = 4
    resource_level: float = 1.0
    dt_s: float = 1.0


@dataclass
class ChannelConfig:
    gain: float = 1e-3
    noise: float = 2e-11
    pathloss_exp: float = 2.0
    backhaul_pathloss_exp: float = 1.5
    backhaul_distance_m: float = 50_000.0
    backhaul_bandwidth_hz: float = 20e6
    vehicle_cloud_distance_m: float = 1_500.0


@dataclass
class PricingConfig:
    mode: str = "per_mb"
    price_range: Range = (0.30, 0.50)
    price_grid: int = 200
    cycle_price_scale: float = 1e-9
    eta_range: Range = (1.0, 3.0)
    vehicle_max_units: float = 10.0
    edge_cost_range: Range = (0.05, 0.15)
    cloud_cost_range: Range = (0.02, 0.10)
    edge_capacity_units: float = 60.0
    edge_own_units: float = 20.0
    cloud_capacity_units: float = 400.0
    min_service_units: float = 0.0
    priority_premium: float = 0.1


@dataclass
class UxConfig:
    weights: Range = (1 / 3, 1 / 3, 1 / 3)
    a_l: float = 1.0
    b_l: float = 0.5
    a_q: float = 1.0
    b_q: float = 3.0
    a_r: float = 1.0
    b_r: float = 3.0


@dataclass
class ThresholdConfig:
    latency_s: float = 5.0
    energy_j: float = 50.0
    cost: float = 20.0
    ux_min: float = 0.2
    reliability_min: float = 0.5
    quality_min: float = 0.5


@dataclass
class ObjectiveConfig:
    weights: Range = (0.2, 0.2, 0.2, 0.2, 0.2)
    penalty: float = 1.0
    utility_scale: float = 10.0
    overload_ratio: float = 0.9
    energy_times_cycles: bool = False
    reliability_window: int = 20
    traffic_window: int = 10


@dataclass
class LearnerConfig:
    episodes: int = 3000
    steps_per_episode: int = 100
    gamma: float = 0.95
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    buffer_size: int = 100_000
    batch_size: int = 128
    tau: float = 1e-3
    warmup: int = 1000
    update_every: int = 1
    hidden: Range = (64, 64)
    gcn_hidden: int = 16
    gcn_out: int = 8
    noise_start: float = 0.2
    noise_end: float = 0.01
    share_tier_weights: bool = False


@dataclass
class BaselineConfig:
    madqn_bins: int = 5
    madqn_lr: float = 1e-3
    eps_start: float = 1.0
    eps_end: float = 0.05
    ga_population: int = 50
    ga_generations: int = 100
    ga_tournament: int = 3
    ga_crossover: float = 0.9
    ga_mutation: float = 0.02


@dataclass
class HarnessConfig:
    log_steps: bool = False
    final_window: int = 50
    sweeps: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    seed: int = 0
    world: WorldConfig = field(default_factory=WorldConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    pricing: PricingConfig = field(default_factory=PricingConfig)
    ux: UxConfig = field(default_factory=UxConfig)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)

    def to_dict(self) -> dict:
        return _to_plain(dataclasses.asdict(self))

    def digest(self) -> str:
        """Stable short hash of the full configuration."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with dotted overrides, e.g. ``replace(**{"world.n_vehicles": 5})``."""
        data = self.to_dict()
        for dotted, value in sections.items():
            node = data
            *parents, leaf = dotted.split(".")
            for p in parents:
                node = node[p]
            node[leaf] = value
        return from_dict(data)


SWEEP_AXES = ("task_size_mb", "resource_level", "task_prob")


def _to_plain(obj):
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _coerce(name: str, value: Any, default: Any):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or len(value) != len(default):
            raise ConfigError(f"{name}: expected a list of {len(default)} numbers, got {value!r}")
        out = []
        for v, d in zip(value, default):
            out.append(_coerce(name, v, d))
        return tuple(out)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{name}: expected a mapping, got {value!r}")
        return dict(value)
    return value


def _build(cls, data: Optional[dict], prefix: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            where = f"{prefix}.{key}" if prefix else key
            raise ConfigError(f"unknown config key '{where}'")
    kwargs = {}
    defaults = cls()
    for name, f in known.items():
        full = f"{prefix}.{name}" if prefix else name
        default = getattr(defaults, name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), data.get(name), full)
        elif name in data:
            kwargs[name] = _coerce(full, data[name], default)
        else:
            kwargs[name] = copy.deepcopy(default)
    return cls(**kwargs)


def _check_range(name: str, r, *, positive: bool = False, nonneg: bool = True):
    lo, hi = r
    if lo > hi:
        raise ConfigError(f"{name}: empty range [{lo}, {hi}]")
    if positive and lo <= 0:
        raise ConfigError(f"{name}: values must be > 0")
    if nonneg and lo < 0:
        raise ConfigError(f"{name}: values must be >= 0")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    w, lr = cfg.world, cfg.learner
    if not 0.0 < lr.gamma < 1.0:
        raise ConfigError("gamma out of (0,1)")
    for name, v in (("world.n_vehicles", w.n_vehicles), ("world.n_edges", w.n_edges)):
        if v < 0:
            raise ConfigError(f"{name}: must be >= 0")
    if w.n_clouds < 1:
        raise ConfigError("world.n_clouds: at least one cloud is required")
    if w.cloud_servers < 1:
        raise ConfigError("world.cloud_servers: must be >= 1")
    if w.priority_classes < 1:
        raise ConfigError("world.priority_classes: must be >= 1")
    if w.ring_length_m <= 0 or w.coverage_radius_m <= 0 or w.dt_s <= 0:
        raise ConfigError("world: ring length, coverage radius and dt must be > 0")
    if not 0.0 <= w.task_prob <= 1.0:
        raise ConfigError("world.task_prob: must lie in [0, 1]")
    if w.resource_level <= 0:
        raise ConfigError("world.resource_level: must be > 0")
    for name in ("vehicle_tx_power_w", "vehicle_cpu_hz", "task_size_mb", "task_cycles",
                 "task_bandwidth_hz", "edge_compute_power_w", "cloud_compute_power_w"):
        _check_range(f"world.{name}", getattr(w, name), positive=True)
    _check_range("world.speed_kmh", w.speed_kmh, positive=True)
    if max(w.edge_compute_power_w) > min(w.cloud_compute_power_w):
        raise ConfigError("world: cloud compute power must dominate edge compute power")
    p = cfg.pricing
    if p.mode not in ("per_mb", "per_cycle"):
        raise ConfigError("pricing.mode: must be 'per_mb' or 'per_cycle'")
    _check_range("pricing.price_range", p.price_range, positive=True)
    _check_range("pricing.eta_range", p.eta_range, positive=True)
    _check_range("pricing.edge_cost_range", p.edge_cost_range)
    _check_range("pricing.cloud_cost_range", p.cloud_cost_range)
    if p.price_grid < 2:
        raise ConfigError("pricing.price_grid: need at least 2 points")
    for name in ("a_l", "b_l", "a_q", "b_q", "a_r", "b_r"):
        if getattr(cfg.ux, name) <= 0:
            raise ConfigError(f"ux.{name}: must be > 0")
    if any(x < 0 for x in cfg.ux.weights) or abs(sum(cfg.ux.weights) - 1.0) > 1e-9:
        raise ConfigError("ux.weights: must be non-negative and sum to 1")
    if any(x < 0 for x in cfg.objective.weights):
        raise ConfigError("objective.weights: must be non-negative")
    t = cfg.thresholds
    if t.latency_s <= 0 or t.energy_j <= 0 or t.cost <= 0:
        raise ConfigError("thresholds: latency, energy and cost limits must be > 0")
    if not 0 < lr.tau <= 1:
        raise ConfigError("learner.tau: must lie in (0, 1]")
    if lr.batch_size < 1 or lr.buffer_size < lr.batch_size:
        raise ConfigError("learner: buffer_size must be >= batch_size >= 1")
    if lr.episodes < 1 or lr.steps_per_episode < 1:
        raise ConfigError("learner: episodes and steps_per_episode must be >= 1")
    b = cfg.baselines
    if b.madqn_bins < 2 or b.ga_population < 2 or b.ga_tournament < 1:
        raise ConfigError("baselines: bins >= 2, population >= 2, tournament >= 1")
    for axis in cfg.harness.sweeps:
        if axis not in SWEEP_AXES:
            raise ConfigError(f"unknown config key 'harness.sweeps.{axis}'")
    return cfg


def from_dict(data: Optional[dict]) -> ExperimentConfig:
    return validate(_build(ExperimentConfig, data, ""))


def load_config(path: str | os.PathLike, seed: Optional[int] = None) -> ExperimentConfig:
    """Read a YAML config, fill defaults, validate; ``seed`` overrides the file."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    cfg = from_dict(data or {})
    if seed is not None:
        cfg.seed = int(seed)
    return cfg


def default_config() -> ExperimentConfig:
    return from_dict({})
