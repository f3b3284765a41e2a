"""Two-stage leader/follower pricing game between clouds, edge nodes and vehicles.

Stage 1: each cloud prices resources for the edge nodes attached to it and for
vehicles that reach it directly. Stage 2: each edge node prices resources for
the vehicles it serves. Vehicles buy ``beta`` units to maximise

    U_v = eta * ln(1 + beta) - theta * beta

An edge node serves up to ``own_units`` from its own hardware at marginal
cost ``c_j`` and buys any shortfall from its cloud at the cloud's price:

    U_j = theta_j * Q - c_j * min(Q, own) - theta_i * max(0, Q - own)

A cloud earns ``(theta_i - c_i)`` on every unit sold. Prices live on a fixed
grid; ties go to the lowest price. The game is solved by backward induction
and the result can be checked with :func:`verify_se`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

SE_TOLERANCE = 1e-6


class InfeasibleGame(ValueError):
    """No grid price satisfies the capacity constraints."""


@dataclass
class GameSpec:
    eta: np.ndarray
    vehicle_cap: np.ndarray
    vehicle_edge: np.ndarray  # edge index, or -1 for a direct cloud customer
    vehicle_cloud: np.ndarray  # cloud index for direct customers
    edge_cost: np.ndarray
    edge_capacity: np.ndarray
    edge_own: np.ndarray
    edge_cloud: np.ndarray
    cloud_cost: np.ndarray
    cloud_capacity: np.ndarray
    price_lo: float = 0.30
    price_hi: float = 0.50
    grid_points: int = 200
    min_units: float = 0.0

    def __post_init__(self):
        f = lambda a: np.atleast_1d(np.asarray(a, dtype=float))
        i = lambda a: np.atleast_1d(np.asarray(a, dtype=int))
        self.eta, self.vehicle_cap = f(self.eta), f(self.vehicle_cap)
        self.vehicle_edge, self.vehicle_cloud = i(self.vehicle_edge), i(self.vehicle_cloud)
        self.edge_cost, self.edge_capacity, self.edge_own = (
            f(self.edge_cost), f(self.edge_capacity), f(self.edge_own))
        self.edge_cloud = i(self.edge_cloud)
        self.cloud_cost, self.cloud_capacity = f(self.cloud_cost), f(self.cloud_capacity)
        if np.any(self.eta <= 0):
            raise ValueError("satisfaction coefficients must be > 0")
        for name in ("vehicle_cap", "edge_cost", "edge_capacity", "edge_own",
                     "cloud_cost", "cloud_capacity"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be >= 0")
        if self.price_lo < 0 or self.price_hi < self.price_lo:
            raise ValueError("price bounds must satisfy 0 <= lo <= hi")
        if len(self.cloud_cost) < 1:
            raise ValueError("at least one cloud is required")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.price_lo, self.price_hi, self.grid_points)

    @property
    def n_vehicles(self) -> int:
        return len(self.eta)

    @property
    def n_edges(self) -> int:
        return len(self.edge_cost)

    @property
    def n_clouds(self) -> int:
        return len(self.cloud_cost)

    def edge_followers(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.vehicle_edge == j)

    def direct_followers(self, i: int) -> np.ndarray:
        return np.flatnonzero((self.vehicle_edge < 0) & (self.vehicle_cloud == i))

    def edges_of(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.edge_cloud == i)

    @classmethod
    def from_dict(cls, data: dict) -> "GameSpec":
        """Build from the mapping layout used by game spec files."""
        veh = data.get("vehicles", [])
        edges = data.get("edges", [])
        clouds = data.get("clouds", [])
        lo, hi = data.get("price_bounds", (0.30, 0.50))
        return cls(
            eta=[v["eta"] for v in veh],
            vehicle_cap=[v.get("cap", 10.0) for v in veh],
            vehicle_edge=[v.get("edge", -1) for v in veh],
            vehicle_cloud=[v.get("cloud", 0) for v in veh],
            edge_cost=[e["cost"] for e in edges],
            edge_capacity=[e["capacity"] for e in edges],
            edge_own=[e.get("own_units", e["capacity"]) for e in edges],
            edge_cloud=[e.get("cloud", 0) for e in edges],
            cloud_cost=[c["cost"] for c in clouds],
            cloud_capacity=[c["capacity"] for c in clouds],
            price_lo=float(lo),
            price_hi=float(hi),
            grid_points=int(data.get("price_grid", 200)),
            min_units=float(data.get("min_service_units", 0.0)),
        )


@dataclass
class StackelbergOutcome:
    demands: np.ndarray  # beta_v
    edge_demands: np.ndarray  # beta_j, bought from the edge's cloud
    edge_prices: np.ndarray  # theta_j
    cloud_prices: np.ndarray  # theta_i
    vehicle_utility: np.ndarray
    edge_utility: np.ndarray
    cloud_utility: np.ndarray
    edge_opted_out: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))
    cloud_opted_out: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))

    @property
    def system_utility(self) -> float:
        return float(self.vehicle_utility.sum() + self.edge_utility.sum() + self.cloud_utility.sum())

    def as_dict(self) -> dict:
        return {
            "demands": self.demands.tolist(),
            "edge_demands": self.edge_demands.tolist(),
            "edge_prices": self.edge_prices.tolist(),
            "cloud_prices": self.cloud_prices.tolist(),
            "vehicle_utility": self.vehicle_utility.tolist(),
            "edge_utility": self.edge_utility.tolist(),
            "cloud_utility": self.cloud_utility.tolist(),
            "edge_opted_out": self.edge_opted_out.tolist(),
            "cloud_opted_out": self.cloud_opted_out.tolist(),
            "system_utility": self.system_utility,
        }


@dataclass(frozen=True)
class LeaderChoice:
    price: float
    demands: np.ndarray
    utility: float
    opted_out: bool = False


@dataclass(frozen=True)
class SeReport:
    is_se: bool
    worst_gain: float
    deviator: Optional[str] = None
    deviators: tuple[str, ...] = ()


def follower_utility(eta, beta, theta):
    return eta * np.log1p(beta) - theta * beta


def follower_best_response(eta: float, theta: float, capacity_cap: float,
                           floor: float = 0.0) -> float:
    """Maximiser of eta*ln(1+beta) - theta*beta over {0} U [floor, cap]."""
    if eta <= 0:
        raise ValueError("eta must be > 0")
    if theta < 0:
        raise ValueError("price must be >= 0")
    if theta == 0:
        if math.isinf(capacity_cap):
            raise ValueError("zero price with unbounded capacity has no best response")
        beta = capacity_cap
    else:
        beta = min(max(eta / theta - 1.0, 0.0), capacity_cap)
    if floor > 0 and beta < floor:
        if capacity_cap < floor:
            return 0.0
        return floor if follower_utility(eta, floor, theta) >= 0 else 0.0
    return beta


def best_responses(etas: np.ndarray, prices: np.ndarray, caps: np.ndarray,
                   floor: float = 0.0) -> np.ndarray:
    """Vectorised best responses, shape (len(prices), len(etas))."""
    etas = np.asarray(etas, float)[None, :]
    caps = np.asarray(caps, float)[None, :]
    p = np.asarray(prices, float)[:, None]
    with np.errstate(divide="ignore"):
        interior = np.where(p > 0, etas / np.where(p > 0, p, 1.0) - 1.0, np.inf)
    beta = np.minimum(np.maximum(interior, 0.0), caps)
    if floor > 0:
        low = beta < floor
        at_floor_ok = follower_utility(etas, floor, p) >= 0
        fixed = np.where((caps >= floor) & at_floor_ok, floor, 0.0)
        beta = np.where(low, fixed, beta)
    return beta


def _seller_utility(price, quantity, cost, own, procure_price):
    own_part = np.minimum(quantity, own)
    bought = np.maximum(quantity - own, 0.0)
    return price * quantity - cost * own_part - procure_price * bought


def leader_price(etas, caps, grid, marginal_cost: float, capacity: float, *,
                 own_units: float = math.inf, procure_price: float = 0.0,
                 floor: float = 0.0) -> LeaderChoice:
    """Best grid price for a seller facing best-responding followers.

    Only prices whose induced demand fits ``capacity`` are eligible. A seller
    for whom no grid price covers its marginal cost, or whose best eligible
    utility is negative, withdraws: it posts the top price and sells nothing.
    """
    grid = np.asarray(grid, float)
    etas = np.asarray(etas, float)
    n = len(etas)
    if marginal_cost >= grid[-1] and n > 0:
        return LeaderChoice(float(grid[-1]), np.zeros(n), 0.0, opted_out=True)
    demand = best_responses(etas, grid, caps, floor)
    q = demand.sum(axis=1)
    feasible = q <= capacity + 1e-12
    if not feasible.any():
        raise InfeasibleGame("empty feasible price set")
    u = _seller_utility(grid, q, marginal_cost, own_units, procure_price)
    u = np.where(feasible, u, -np.inf)
    k = int(np.argmax(u))
    if u[k] < 0:
        return LeaderChoice(float(grid[-1]), np.zeros(n), 0.0, opted_out=True)
    return LeaderChoice(float(grid[k]), demand[k].copy(), float(u[k]))


@dataclass
class _EdgePlan:
    """An edge node's best price for every candidate cloud price."""

    price_idx: np.ndarray
    quantity: np.ndarray
    utility: np.ndarray
    opted_out: np.ndarray
    demand_table: np.ndarray  # (grid, followers)


def _plan_edge(spec: GameSpec, j: int, cloud_prices: np.ndarray, can_procure: bool) -> _EdgePlan:
    grid = spec.grid
    fol = spec.edge_followers(j)
    k = len(cloud_prices)
    cost, own = spec.edge_cost[j], spec.edge_own[j]
    cap = spec.edge_capacity[j] if can_procure else min(spec.edge_capacity[j], own)
    table = best_responses(spec.eta[fol], grid, spec.vehicle_cap[fol], spec.min_units)
    none = _EdgePlan(np.full(k, len(grid) - 1), np.zeros(k), np.zeros(k), np.ones(k, bool), table)
    if len(fol) == 0:
        # nothing to sell: lowest price, zero utility
        return _EdgePlan(np.zeros(k, int), np.zeros(k), np.zeros(k), np.zeros(k, bool), table)
    if cost >= grid[-1]:
        return none
    if spec.min_units > 0 and cap < spec.min_units:
        raise InfeasibleGame(f"edge {j}: capacity below the minimum service floor")
    q = table.sum(axis=1)
    feasible = q <= cap + 1e-12
    if not feasible.any():
        raise InfeasibleGame(f"edge {j}: empty feasible price set")
    u = _seller_utility(grid[None, :], q[None, :], cost, own, cloud_prices[:, None])
    u = np.where(feasible[None, :], u, -np.inf)
    idx = np.argmax(u, axis=1)
    best = u[np.arange(k), idx]
    out = best < 0
    idx = np.where(out, len(grid) - 1, idx)
    qty = np.where(out, 0.0, q[idx])
    return _EdgePlan(idx, qty, np.where(out, 0.0, best), out, table)


def _solve_cloud(spec: GameSpec, i: int):
    """Backward induction inside one cloud's market. Returns (price, opted_out, edge plans)."""
    grid = spec.grid
    edges = spec.edges_of(i)
    direct = spec.direct_followers(i)
    cost, cap = spec.cloud_cost[i], spec.cloud_capacity[i]
    has_market = len(direct) > 0 or len(edges) > 0

    def withdraw():
        plans = {int(j): _plan_edge(spec, j, np.array([grid[-1]]), can_procure=False) for j in edges}
        return len(grid) - 1, True, plans, np.zeros(len(direct))

    if has_market and cost >= grid[-1]:
        return withdraw()
    plans = {int(j): _plan_edge(spec, j, grid, can_procure=True) for j in edges}
    total = np.zeros(len(grid))
    for j, plan in plans.items():
        total += np.maximum(plan.quantity - spec.edge_own[j], 0.0)
    direct_table = best_responses(spec.eta[direct], grid, spec.vehicle_cap[direct], spec.min_units)
    total += direct_table.sum(axis=1)
    feasible = total <= cap + 1e-12
    if not feasible.any():
        raise InfeasibleGame(f"cloud {i}: empty feasible price set")
    u = np.where(feasible, grid * total - cost * total, -np.inf)
    k = int(np.argmax(u))
    if u[k] < 0:
        return withdraw()
    plans = {j: _EdgePlan(p.price_idx[[k]], p.quantity[[k]], p.utility[[k]],
                          p.opted_out[[k]], p.demand_table) for j, p in plans.items()}
    return k, False, plans, direct_table[k]


def backward_induction(spec: GameSpec) -> StackelbergOutcome:
    """Solve stage 2 (edge prices) for every candidate cloud price, then stage 1."""
    grid = spec.grid
    V, J, I = spec.n_vehicles, spec.n_edges, spec.n_clouds
    beta = np.zeros(V)
    beta_j = np.zeros(J)
    theta_j = np.full(J, grid[0])
    theta_i = np.full(I, grid[0])
    u_v, u_j, u_i = np.zeros(V), np.zeros(J), np.zeros(I)
    edge_out = np.zeros(J, bool)
    cloud_out = np.zeros(I, bool)

    for i in range(I):
        k, out, plans, direct_beta = _solve_cloud(spec, i)
        theta_i[i] = grid[k]
        cloud_out[i] = out
        direct = spec.direct_followers(i)
        beta[direct] = direct_beta
        sold = direct_beta.sum()
        for j, plan in plans.items():
            idx = int(plan.price_idx[0])
            theta_j[j] = grid[idx]
            edge_out[j] = bool(plan.opted_out[0])
            fol = spec.edge_followers(j)
            if not edge_out[j]:
                beta[fol] = plan.demand_table[idx]
            q = beta[fol].sum()
            beta_j[j] = max(q - spec.edge_own[j], 0.0) if not out else 0.0
            sold += beta_j[j]
            u_j[j] = _seller_utility(theta_j[j], q, spec.edge_cost[j], spec.edge_own[j], theta_i[i])
        u_i[i] = theta_i[i] * sold - spec.cloud_cost[i] * sold

    for v in range(V):
        j = spec.vehicle_edge[v]
        price = theta_j[j] if j >= 0 else theta_i[spec.vehicle_cloud[v]]
        u_v[v] = follower_utility(spec.eta[v], beta[v], price)
    _check_capacities(spec, beta, beta_j)
    return StackelbergOutcome(beta, beta_j, theta_j, theta_i, u_v, u_j, u_i, edge_out, cloud_out)


def _check_capacities(spec: GameSpec, beta, beta_j) -> None:
    for j in range(spec.n_edges):
        if beta[spec.edge_followers(j)].sum() > spec.edge_capacity[j] + 1e-9:
            raise AssertionError(f"edge {j} capacity exceeded")
    for i in range(spec.n_clouds):
        load = beta[spec.direct_followers(i)].sum() + beta_j[spec.edges_of(i)].sum()
        if load > spec.cloud_capacity[i] + 1e-9:
            raise AssertionError(f"cloud {i} capacity exceeded")


def evaluate_prices(spec: GameSpec, edge_prices, cloud_prices) -> StackelbergOutcome:
    """Outcome when prices are imposed and every vehicle best-responds."""
    edge_prices = np.asarray(edge_prices, float)
    cloud_prices = np.asarray(cloud_prices, float)
    V = spec.n_vehicles
    beta = np.zeros(V)
    for v in range(V):
        j = spec.vehicle_edge[v]
        price = edge_prices[j] if j >= 0 else cloud_prices[spec.vehicle_cloud[v]]
        beta[v] = follower_best_response(spec.eta[v], price, spec.vehicle_cap[v], spec.min_units)
    beta_j = np.array([max(beta[spec.edge_followers(j)].sum() - spec.edge_own[j], 0.0)
                       for j in range(spec.n_edges)])
    return _assemble(spec, beta, beta_j, edge_prices, cloud_prices)


def _assemble(spec, beta, beta_j, theta_j, theta_i) -> StackelbergOutcome:
    V, J, I = spec.n_vehicles, spec.n_edges, spec.n_clouds
    u_v = np.zeros(V)
    for v in range(V):
        j = spec.vehicle_edge[v]
        price = theta_j[j] if j >= 0 else theta_i[spec.vehicle_cloud[v]]
        u_v[v] = follower_utility(spec.eta[v], beta[v], price)
    u_j = np.zeros(J)
    for j in range(J):
        q = beta[spec.edge_followers(j)].sum()
        u_j[j] = _seller_utility(theta_j[j], q, spec.edge_cost[j], spec.edge_own[j],
                                 theta_i[spec.edge_cloud[j]])
    u_i = np.zeros(I)
    for i in range(I):
        sold = beta[spec.direct_followers(i)].sum() + beta_j[spec.edges_of(i)].sum()
        u_i[i] = theta_i[i] * sold - spec.cloud_cost[i] * sold
    return StackelbergOutcome(beta, beta_j, np.asarray(theta_j, float), np.asarray(theta_i, float),
                              u_v, u_j, u_i, np.zeros(J, bool), np.zeros(I, bool))


def verify_se(outcome: StackelbergOutcome, spec: GameSpec, grid_step: float = 1e-3,
              tol: float = SE_TOLERANCE) -> SeReport:
    """Largest utility gain any single player can get by deviating on its own.

    Vehicles deviate over a ``grid_step`` grid of demands; edge nodes and clouds
    deviate over the price grid (or by withdrawing) while everyone below them
    re-optimises.
    """
    grid = spec.grid
    worst, who = -math.inf, None
    gainers: list[str] = []
    edge_out = outcome.edge_opted_out if len(outcome.edge_opted_out) else np.zeros(spec.n_edges, bool)
    cloud_out = outcome.cloud_opted_out if len(outcome.cloud_opted_out) else np.zeros(spec.n_clouds, bool)

    def note(gain, name):
        nonlocal worst, who
        if gain > tol:
            gainers.append(name)
        if gain > worst:
            worst, who = gain, name

    for v in range(spec.n_vehicles):
        j = spec.vehicle_edge[v]
        if j >= 0:
            price, closed = outcome.edge_prices[j], edge_out[j]
        else:
            i = spec.vehicle_cloud[v]
            price, closed = outcome.cloud_prices[i], cloud_out[i]
        cap = 0.0 if closed else spec.vehicle_cap[v]
        devs = np.append(np.arange(0.0, cap, grid_step), cap) if cap > 0 else np.zeros(1)
        if spec.min_units > 0:
            devs = devs[(devs == 0) | (devs >= spec.min_units)]
        here = follower_utility(spec.eta[v], outcome.demands[v], price)
        note(float(np.max(follower_utility(spec.eta[v], devs, price)) - here), f"vehicle:{v}")

    for j in range(spec.n_edges):
        i = spec.edge_cloud[j]
        fol = spec.edge_followers(j)
        q = outcome.demands[fol].sum()
        bought = outcome.edge_demands[j]
        here = outcome.edge_prices[j] * q - spec.edge_cost[j] * (q - bought) - outcome.cloud_prices[i] * bought
        try:
            plan = _plan_edge(spec, j, np.array([outcome.cloud_prices[i]]), can_procure=not cloud_out[i])
            best = max(float(plan.utility[0]), 0.0)
        except InfeasibleGame:
            best = 0.0
        note(best - here, f"edge:{j}")

    for i in range(spec.n_clouds):
        sold = outcome.demands[spec.direct_followers(i)].sum() + outcome.edge_demands[spec.edges_of(i)].sum()
        here = outcome.cloud_prices[i] * sold - spec.cloud_cost[i] * sold
        best = 0.0
        try:
            plans = {int(j): _plan_edge(spec, j, grid, can_procure=True) for j in spec.edges_of(i)}
            direct = spec.direct_followers(i)
            total = best_responses(spec.eta[direct], grid, spec.vehicle_cap[direct], spec.min_units).sum(axis=1)
            for j, plan in plans.items():
                total = total + np.maximum(plan.quantity - spec.edge_own[j], 0.0)
            ok = total <= spec.cloud_capacity[i] + 1e-12
            if ok.any():
                best = max(best, float(np.max((grid * total - spec.cloud_cost[i] * total)[ok])))
        except InfeasibleGame:
            pass
        note(best - here, f"cloud:{i}")

    if worst == -math.inf:
        return SeReport(True, 0.0, None)
    is_se = bool(worst <= tol)
    return SeReport(is_se, float(worst), None if is_se else who, tuple(gainers))
