"""Send every pending task down one route and compare what each route costs.

Three fixed policies on the default world: run at the edge, forward from the
edge to the cloud, or upload straight to the cloud. Each policy replays the
same seeds, so the task stream is identical across rows.
Run with ``python3 demos/route_walkthrough.py``.
"""

import numpy as np

from vtmig.config import default_config
from vtmig.env import Env, JointAction

POLICIES = {
    # vehicle: [edge flag, cloud flag, offload share, spare]; edge: [cpu, forward share, access split]
    "vehicle -> edge": ([1.0, 0.0, 1.0, 0.0], [1.0, 0.0, 0.5]),
    "vehicle -> edge -> cloud": ([1.0, 0.0, 1.0, 0.0], [1.0, 1.0, 0.5]),
    "vehicle -> cloud": ([0.0, 1.0, 1.0, 0.0], [1.0, 0.0, 0.5]),
}

cfg = default_config().replace(**{"learner.steps_per_episode": 20})
env = Env(cfg)
print(f"{'route':26s} {'latency s':>10s} {'energy J':>10s} {'cost':>8s} {'ux':>6s}")
for name, (veh, edge) in POLICIES.items():
    rows = []
    for seed in range(3):
        env.reset(seed)
        V, J, I = env.n_vehicles, env.n_edges, env.n_clouds
        act = JointAction(np.tile(veh, (V, 1)), np.tile(edge, (J, 1)), np.tile([1.0, 0.0, 1.0], (I, 1)))
        for _ in range(cfg.learner.steps_per_episode):
            _, _, _, m = env.step(act)
            rows.append([m["latency"], m["energy"], m["cost"], m["ux"]])
    lat, en, cost, ux = np.mean(rows, axis=0)
    print(f"{name:26s} {lat:10.3f} {en:10.3f} {cost:8.3f} {ux:6.3f}")
