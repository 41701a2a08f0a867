"""Recursive coordinate bisection over a cost map and the resulting cut tree."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costmap import CostMap, DegenerateRegionError, OutOfDomainError, find_cut
from .geometry import Box3


def is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class CutTree:
    """Binary tree of axis-aligned cuts.

    Nodes are stored in flat arrays. An internal node ``i`` cuts along
    ``axis[i]`` at ``position[i]`` with children ``left[i]`` (below the cut)
    and ``right[i]`` (at or above it). Leaves have ``axis == -1`` and carry
    their rank in ``rank[i]``. Every leaf sits at exactly ``depth`` levels.
    """

    root_bounds: Box3
    depth: int
    axis: np.ndarray
    position: np.ndarray
    left: np.ndarray
    right: np.ndarray
    rank: np.ndarray
    boxes: tuple

    @property
    def num_ranks(self) -> int:
        return 1 << self.depth

    def owners(self, points) -> np.ndarray:
        """Vectorized :func:`owner_of` for an ``(n, 3)`` array."""
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(p) and not self.root_bounds.contains(p).all():
            bad = p[~self.root_bounds.contains(p)][0]
            raise OutOfDomainError(f"point {tuple(bad)} outside {self.root_bounds}")
        node = np.zeros(len(p), dtype=np.int64)
        rows = np.arange(len(p))
        for _ in range(self.depth):
            upper = p[rows, self.axis[node]] >= self.position[node]
            node = np.where(upper, self.right[node], self.left[node])
        return self.rank[node]

    def leaf_boxes(self) -> list[Box3]:
        return [subdomain_of(self, r) for r in range(self.num_ranks)]


def owner_of(tree: CutTree, point) -> int:
    """Rank owning ``point``; points on a cut plane go to the upper side."""
    p = np.asarray(point, dtype=float)
    if not tree.root_bounds.contains(p):
        raise OutOfDomainError(f"point {tuple(p)} outside {tree.root_bounds}")
    node = 0
    while tree.axis[node] >= 0:
        if p[tree.axis[node]] >= tree.position[node]:
            node = tree.right[node]
        else:
            node = tree.left[node]
    return int(tree.rank[node])


def subdomain_of(tree: CutTree, rank: int) -> Box3:
    if not 0 <= rank < tree.num_ranks:
        raise ValueError(f"rank {rank} out of range for {tree.num_ranks} ranks")
    return tree.boxes[rank]


def rcb_partition(cmap: CostMap, num_ranks: int) -> CutTree:
    """Split ``cmap.bounds`` into ``num_ranks`` boxes of equal interpolated cost.

    Each node is cut normal to its longest edge (ties: x, y, z) where half of
    its cost lies on either side. Zero-cost nodes are cut at the geometric
    midpoint. Leaves are numbered left to right.
    """
    if not is_power_of_two(num_ranks):
        raise ValueError(f"RCB needs a power-of-two rank count, got {num_ranks}")
    if not cmap.total > 0:
        raise ValueError("cost map must have positive total before partitioning")
    depth = int(num_ranks).bit_length() - 1

    axis, position, left, right, rank = [], [], [], [], []
    boxes = [None] * num_ranks
    next_rank = 0

    def new_node():
        axis.append(-1)
        position.append(np.nan)
        left.append(-1)
        right.append(-1)
        rank.append(-1)
        return len(axis) - 1

    def build(box: Box3, level: int) -> int:
        nonlocal next_rank
        node = new_node()
        if level == depth:
            rank[node] = next_rank
            boxes[next_rank] = box
            next_rank += 1
            return node
        ax = box.longest_axis()
        try:
            cut = find_cut(cmap, box, ax, 0.5)
        except DegenerateRegionError:
            cut = 0.5 * (box.lo[ax] + box.hi[ax])
        lower, upper = box.split(ax, cut)
        axis[node] = ax
        position[node] = cut
        left[node] = build(lower, level + 1)
        right[node] = build(upper, level + 1)
        return node

    build(cmap.bounds, 0)
    return CutTree(
        root_bounds=cmap.bounds,
        depth=depth,
        axis=np.asarray(axis, dtype=np.int64),
        position=np.asarray(position, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        rank=np.asarray(rank, dtype=np.int64),
        boxes=tuple(boxes),
    )
