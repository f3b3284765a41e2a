"""Train the multi-objective learner next to two baselines and print the table.

A small world keeps this to a minute or two. Forty episodes is still inside
the exploration schedule, so the learners can trail the random policy here;
pass 300 to see them overtake it. Metrics land in ``demo_runs/``;
``vtmig emit-plots demo_runs`` turns them into per-figure data files.
Run with ``python3 demos/compare_learners.py [episodes]``.
"""

import csv
import sys

from vtmig.config import default_config
from vtmig.harness import run_experiment, summarize

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 40
cfg = default_config().replace(**{
    "world.n_vehicles": 10, "world.n_edges": 3, "world.n_clouds": 1,
    "learner.steps_per_episode": 25, "learner.episodes": episodes,
    "learner.warmup": 64, "harness.final_window": max(episodes // 4, 1),
})
run_experiment(cfg, ["mo-maddpg", "maddpg", "random"], [0], "demo_runs")
_, path = summarize("demo_runs", final_window=cfg.harness.final_window)
with open(path, newline="", encoding="utf-8") as fh:
    for row in csv.DictReader(fh):
        print(f"{row['algorithm']:10s} reward {float(row['reward']):8.3f}  latency {float(row['latency']):6.3f}  "
              f"energy {float(row['energy']):7.3f}  ux {float(row['ux']):6.3f}")
