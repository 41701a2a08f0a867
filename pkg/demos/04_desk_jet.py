"""
The desk-scale argon jet
========================

Runs the shipped desk_jet scenario with particle balancing and with TACF on
the same seed, then prints the steady-state summaries and the per-rank
times sorted as for a bar chart. A full 1000-step run takes a few minutes
per strategy; pass a smaller step count to try it quickly::

    python demos/04_desk_jet.py 300 16
"""

import sys
from pathlib import Path

import numpy as np

from dsmc_balance.config import load_config, scenario_path
from dsmc_balance.harness import compare_strategies

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
ranks = int(sys.argv[2]) if len(sys.argv) > 2 else 16
cfg = load_config(scenario_path("desk_jet")).replace(steps=steps, ranks=ranks)
if steps < 1000:
    # keep the schedule inside the shorter run
    cfg = cfg.replace(stop_at=max(int(0.9 * steps), 1), early_until=min(100, max(int(0.9 * steps), 1)))

out = Path("desk_jet_out")
summaries = compare_strategies(cfg, ["particle", "tacf"], out)
for name, s in summaries.items():
    print(f"{name:8s} imbalance {s['imbalance_ratio']:.3f}  mean_T {s['mean_T']:.4g}  "
          f"within 15%: {s['fraction_within_15pct']:.2f}  particles {s['final_total_particles']}")

# sorted per-rank times of the final window, the input of a bar chart
for name in summaries:
    rank_file = sorted((out / name).glob("ranks_*.csv"))[-1]
    data = np.genfromtxt(rank_file, delimiter=",", names=True)
    order = np.argsort(data["T_s"])
    rel = data["T_s"][order] / data["T_s"].mean()
    print(name, "T/mean sorted:", np.round(rel, 2))
