"""
Particle balancing against time-allocated cost
==============================================

Particles in one octant cost twice as much to process. Balancing particle
counts leaves the ranks in that octant with twice the work. Spreading each
rank's measured time over its particles fixes this in one or two passes.
"""

import numpy as np

from dsmc_balance import Box3, DomainSpec, GasModel, Inlet, StrategyConfig, imbalance_metrics
from dsmc_balance.runtime import SyntheticCostModel, load_particles, make_world, probe_timings, rebalance

domain = DomainSpec(Box3((0, 0, 0), (0.8, 0.8, 0.8)), Inlet((0.4, 0.4, 0.0), 0.1, (0, 0, 2900.0), 0.0, 300.0))
model = SyntheticCostModel(a_move=1.0, a_pair=0.0, a_create=0.0,
                           expensive_region=Box3((0, 0, 0), (0.4, 0.4, 0.4)), expensive_factor=2.0)

rng = np.random.default_rng(2)
positions = rng.random((100_000, 3)) * 0.8
# fnum = 1 keeps collisions negligible; the synthetic model sees only moves
world = make_world(domain, GasModel(fnum=1.0), 1e-9, 16, cost_model=model)
load_particles(world, positions, np.zeros_like(positions))

for name in ("particle", "particle", "tacf", "tacf"):
    times = probe_timings(world).times
    print(f"before {name:8s} pass: imbalance ratio {imbalance_metrics(times).imbalance_ratio:.3f}")
    rebalance(world, StrategyConfig(name), times)

times = probe_timings(world).times
counts = [rs.count for rs in world.ranks]
print(f"final: imbalance ratio {imbalance_metrics(times).imbalance_ratio:.3f}")
print("particles per rank", counts)
