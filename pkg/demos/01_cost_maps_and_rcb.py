"""
Cost maps and recursive coordinate bisection
============================================

A cost map is a regular grid of non-negative costs over the domain. RCB
cuts it recursively along the longest axis so that both halves carry the
same cost, until there is one box per rank.
"""

import numpy as np

from dsmc_balance import Box3, deposit_many, integrate, new_cost_map, rcb_partition

domain = Box3((0.0, 0.0, 0.0), (0.8, 0.8, 0.8))
cmap = new_cost_map(domain, num_ranks=8)
print("map shape", cmap.shape, "cells", cmap.n_cells)

# a jet-like cloud: most particles near the centreline
rng = np.random.default_rng(0)
n = 50_000
xy = 0.4 + 0.05 * rng.standard_normal((n, 2))
z = 0.8 * rng.random(n) ** 0.5
points = np.clip(np.column_stack([xy, z]), 0.0, 0.8)
deposit_many(cmap, points, np.ones(n))

tree = rcb_partition(cmap, 8)
for rank, box in enumerate(tree.leaf_boxes()):
    print(f"rank {rank}: lo={np.round(box.lo, 3)} hi={np.round(box.hi, 3)} "
          f"cost={integrate(cmap, box):9.1f}")

# point-to-owner lookup walks the tree; points on a cut go to the upper side
owners = tree.owners(points)
print("particles per rank", np.bincount(owners, minlength=8))
