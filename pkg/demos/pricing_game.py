"""Solve a small pricing game and check that nobody gains by deviating.

Two edge nodes share one cloud; four vehicles buy resources from the edges and
one buys straight from the cloud. Run with ``python3 demos/pricing_game.py``.
"""

import numpy as np

from vtmig.stackelberg import GameSpec, backward_induction, evaluate_prices, verify_se

spec = GameSpec(
    eta=[1.5, 2.0, 2.5, 3.0, 2.2],
    vehicle_cap=[10.0] * 5,
    vehicle_edge=[0, 0, 1, 1, -1],
    vehicle_cloud=[0, 0, 0, 0, 0],
    edge_cost=[0.10, 0.15],
    edge_capacity=[60.0, 60.0],
    edge_own=[1.0, 0.5],
    edge_cloud=[0, 0],
    cloud_cost=[0.05],
    cloud_capacity=[400.0],
    price_lo=0.1,
    price_hi=2.0,
    grid_points=191,
)

out = backward_induction(spec)
print("edge prices   ", np.round(out.edge_prices, 3))
print("cloud price   ", np.round(out.cloud_prices, 3))
print("demands       ", np.round(out.demands, 3))
print("edge purchases", np.round(out.edge_demands, 3))
print("utilities v/j/i", np.round(out.vehicle_utility, 3), np.round(out.edge_utility, 3),
      np.round(out.cloud_utility, 3))

report = verify_se(out, spec)
print(f"equilibrium: {report.is_se}, largest unilateral gain {report.worst_gain:.2e}")

# Holding the cloud price fixed, a higher edge price than the solved one only loses the edge money.
for bump in (0.0, 0.1, 0.2):
    moved = evaluate_prices(spec, out.edge_prices + bump, out.cloud_prices)
    print(f"edge prices +{bump:.1f}: edge utilities {np.round(moved.edge_utility, 3)}")
