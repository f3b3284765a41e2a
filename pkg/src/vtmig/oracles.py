"""Reference computations used to check the models.

Nothing here imports the code under test. Closed forms are re-transcribed
from their definitions; the queue is checked against a discrete-event
simulation; games against exhaustive search; gradients against central
differences.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from typing import Callable, Sequence

import numpy as np


# -- closed forms --------------------------------------------------------------

def rate(bandwidth, power, gain, distance, exponent, noise) -> float:
    snr = power * gain * distance ** (-exponent) / noise
    return bandwidth * math.log2(1.0 + snr)


def transmission_time(bits, bits_per_second) -> float:
    return bits / bits_per_second


def compute_time(cycles, hz) -> float:
    return cycles / hz


def waiting_time(priority, queue_length, mu, servers, lam) -> float:
    if queue_length == 0:
        return 0.0
    return priority * queue_length / (mu * (servers * mu - lam))


def route_energy(route: str, bits, cycles, p_vehicle, r_up, kappa_src, f_src, p_edge, r_bh,
                 kappa_dst, f_dst, times_cycles=False) -> float:
    """Total energy of a route by direct accumulation over the terms it pays."""
    if route == "none":
        return 0.0
    scale = cycles if times_cycles else 1.0
    total = p_vehicle * bits / r_up
    if route == "v->j":
        total += kappa_src * f_src ** 2 * scale
    if route == "v->j->i":
        total += p_edge * bits / r_bh
    if route in ("v->i", "v->j->i"):
        total += kappa_dst * f_dst ** 2 * scale
    return total


def megabyte_cost(bits, price) -> float:
    return (bits / 8e6) * price


def experience(L, Q, R, w, a, b) -> float:
    """w = (w_l, w_q, w_r), a = (a_l, a_q, a_r), b = (b_l, b_q, b_r)."""
    return (w[0] * a[0] * math.exp(-b[0] * L)
            + w[1] * a[1] * (1.0 - math.exp(-b[1] * Q))
            + w[2] * a[2] * (1.0 - math.exp(-b[2] * R)))


# -- queue simulation ----------------------------------------------------------

def simulate_priority_queue(arrival_rate: float, service_rate: float, servers: int,
                            class_probs: Sequence[float], n_events: int,
                            rng: np.random.Generator, warmup_frac: float = 0.05) -> dict:
    """Non-preemptive priority M/M/s queue, event by event.

    Class 0 is served first; within a class service is FIFO. Returns the
    time-average number waiting, the mean wait overall and per class, and the
    number of processed events (arrivals plus departures).
    """
    probs = np.asarray(class_probs, dtype=float)
    probs = probs / probs.sum()
    n_cls = len(probs)
    chunk = 65536
    inter = iter(())
    classes = iter(())
    services = iter(())

    def refill():
        nonlocal inter, classes, services
        inter = iter(rng.exponential(1.0 / arrival_rate, chunk).tolist())
        classes = iter(rng.choice(n_cls, size=chunk, p=probs).tolist())
        services = iter(rng.exponential(1.0 / service_rate, chunk).tolist())

    def draw():
        try:
            return next(inter), next(classes), next(services)
        except StopIteration:
            refill()
            return next(inter), next(classes), next(services)

    queues = [deque() for _ in range(n_cls)]
    departures: list[float] = []
    busy = 0
    waiting = 0
    now = 0.0
    gap, cls, svc = draw()
    next_arrival = gap
    pending = (cls, svc)

    warm = int(n_events * warmup_frac)
    events = 0
    t0 = None
    area = 0.0
    waits_sum = [0.0] * n_cls
    waits_n = [0] * n_cls

    while events < n_events:
        if departures and departures[0] <= next_arrival:
            t = heapq.heappop(departures)
            is_arrival = False
        else:
            t = next_arrival
            is_arrival = True
        if t0 is not None:
            area += waiting * (t - now)
        now = t
        events += 1
        if events == warm:
            t0 = now
        if is_arrival:
            c, s_time = pending
            if busy < servers:
                busy += 1
                heapq.heappush(departures, now + s_time)
                if t0 is not None:
                    waits_n[c] += 1
            else:
                queues[c].append((now, s_time))
                waiting += 1
            gap, cls, svc = draw()
            next_arrival = now + gap
            pending = (cls, svc)
        else:
            busy -= 1
            for c in range(n_cls):
                if queues[c]:
                    arrived, s_time = queues[c].popleft()
                    waiting -= 1
                    busy += 1
                    heapq.heappush(departures, now + s_time)
                    if t0 is not None:
                        waits_sum[c] += now - arrived
                        waits_n[c] += 1
                    break
    span = now - (t0 if t0 is not None else 0.0)
    n_all = sum(waits_n)
    return {
        "mean_queue_length": area / span if span > 0 else 0.0,
        "mean_wait": sum(waits_sum) / n_all if n_all else 0.0,
        "class_wait": [ws / n if n else 0.0 for ws, n in zip(waits_sum, waits_n)],
        "events": events,
    }


def erlang_c_queue_length(arrival_rate: float, service_rate: float, servers: int) -> float:
    """Closed-form mean number waiting in a FIFO M/M/s queue."""
    a = arrival_rate / service_rate
    rho = a / servers
    head = sum(a ** k / math.factorial(k) for k in range(servers))
    tail = a ** servers / (math.factorial(servers) * (1.0 - rho))
    p_wait = tail / (head + tail)
    return p_wait * rho / (1.0 - rho)


# -- search oracles ------------------------------------------------------------

def best_demand_by_grid(eta: float, price: float, cap: float, step: float = 1e-4) -> float:
    grid = np.arange(0.0, cap + step / 2, step)
    u = eta * np.log(1.0 + grid) - price * grid
    return float(grid[int(np.argmax(u))])


def best_demand_by_zoom(eta: float, price: float, cap: float, step: float = 1e-3,
                        tol: float = 1e-10) -> float:
    """Grid search over demand, re-gridded around the best point until ``tol``."""
    lo, hi = 0.0, cap
    while True:
        grid = np.append(np.arange(lo, hi, step), hi)
        u = eta * np.log(1.0 + grid) - price * grid
        best = float(grid[int(np.argmax(u))])
        if step <= tol:
            return best
        lo, hi = max(best - step, 0.0), min(best + step, cap)
        step /= 100.0


def single_seller_by_grid(etas, cost, capacity, prices, cap=math.inf) -> tuple[float, float]:
    """(price, utility) maximising (p - c) * total closed-form demand over ``prices``."""
    best_p, best_u = None, -math.inf
    for p in prices:
        q = sum(min(max(e / p - 1.0, 0.0), cap) for e in etas)
        if q > capacity:
            continue
        u = (p - cost) * q
        if u > best_u:
            best_p, best_u = p, u
    return best_p, best_u


def chain_game_by_grid(eta: float, cap: float, edge_cost: float, edge_capacity: float,
                       edge_own: float, cloud_cost: float, cloud_capacity: float,
                       prices: np.ndarray, step: float = 1e-3) -> dict:
    """One vehicle, one edge node, one cloud: exhaustive search over both prices.

    The vehicle's demand at each edge price comes from a zooming grid search
    over demand, fine enough that rounding cannot flip a near-tie in the
    edge's choice; for every cloud price the edge takes its best feasible price (or
    withdraws if that earns less than nothing), and the cloud then takes its
    best price. Ties go to the lowest price.
    """
    prices = np.asarray(prices, dtype=float)
    demand = np.array([best_demand_by_zoom(eta, p, cap, step) for p in prices])
    hi = len(prices) - 1
    table = []
    for ti in prices:
        best_u, best_k = -math.inf, None
        for k, tj in enumerate(prices):
            q = demand[k]
            if q > edge_capacity + 1e-12:
                continue
            bought = max(q - edge_own, 0.0)
            u = tj * q - edge_cost * min(q, edge_own) - ti * bought
            if u > best_u:
                best_u, best_k = u, k
        if best_k is None or best_u < 0 or edge_cost >= prices[-1]:
            table.append((hi, 0.0, 0.0, 0.0))
        else:
            q = demand[best_k]
            table.append((best_k, q, max(q - edge_own, 0.0), best_u))
    best_u, best_i = -math.inf, None
    for n, ti in enumerate(prices):
        sold = table[n][2]
        if sold > cloud_capacity + 1e-12:
            continue
        u = (ti - cloud_cost) * sold
        if u > best_u:
            best_u, best_i = u, n
    k, q, bought, u_edge = table[best_i]
    return {"cloud_price": float(prices[best_i]), "edge_price": float(prices[k]),
            "demand": float(q), "edge_demand": float(bought), "edge_utility": float(u_edge),
            "cloud_utility": float(best_u)}


# -- gradients -----------------------------------------------------------------

def central_difference(f: Callable[[], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place and restoring it."""
    grad = np.zeros_like(x, dtype=float)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        grad[idx] = (up - down) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


# -- graphs --------------------------------------------------------------------

def ring_pairs_by_distance(n: int) -> list[tuple[int, int]]:
    """Pairs of positions one hop apart on an n-cycle."""
    out = []
    for a in range(n):
        for b in range(a + 1, n):
            d = abs(a - b)
            if min(d, n - d) == 1:
                out.append((a, b))
    return out


def dense_gcn(H, A, weights, activations):
    """Layer-by-layer propagation with explicit degree matrices."""
    N = A.shape[0]
    A_bar = A + np.eye(N)
    deg = np.diag(A_bar.sum(axis=1))
    d_inv_sqrt = np.diag(1.0 / np.sqrt(np.diag(deg)))
    op = d_inv_sqrt @ A_bar @ d_inv_sqrt
    out = H
    for W, act in zip(weights, activations):
        out = op @ out @ W
        if act == "relu":
            out = np.where(out > 0, out, 0.0)
    return out
