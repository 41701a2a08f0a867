"""Discretized cost function on a uniform grid.

The density inside each map cell is taken to be constant, so the cumulative
cost along any axis is piecewise linear and cut positions can be found by
inverting it exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box3


class OutOfDomainError(ValueError):
    """A position lies outside the bounds it was checked against."""


class DegenerateRegionError(ValueError):
    """A region carries no cost, so no cost fraction can be located in it."""


def grid_shape(lengths, min_cells: int) -> tuple[int, int, int]:
    """Per-axis cell counts with near-cubic cells and at least ``min_cells`` total.

    Counts are ``floor`` or ``ceil`` of ``L_k * t`` where ``t`` makes the ideal
    product exactly ``min_cells``; among the eight combinations meeting the
    floor, the smallest product wins and ties go to the most cubic cells.
    """
    if min_cells < 1:
        raise ValueError("min_cells must be >= 1")
    lengths = np.asarray(lengths, dtype=float)
    t = (min_cells / float(np.prod(lengths))) ** (1.0 / 3.0)
    ideal = lengths * t
    options = [sorted({max(1, math.floor(x)), max(1, math.ceil(x))}) for x in ideal]
    best = None
    for combo in itertools.product(*options):
        total = combo[0] * combo[1] * combo[2]
        if total < min_cells:
            continue
        widths = lengths / np.asarray(combo)
        aspect = widths.max() / widths.min()
        key = (total, aspect)
        if best is None or key < best[0]:
            best = (key, combo)
    if best is None:
        # all-ceil can miss the floor only through rounding in t
        combo = [max(1, math.ceil(x)) for x in ideal]
        while combo[0] * combo[1] * combo[2] < min_cells:
            combo[int(np.argmin(np.asarray(combo) / lengths))] += 1
        return tuple(combo)
    return tuple(int(c) for c in best[1])


@dataclass
class CostMap:
    bounds: Box3
    shape: tuple[int, int, int]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)
        self.values = np.asarray(self.values, dtype=float).reshape(self.shape)

    @property
    def spacing(self) -> np.ndarray:
        return self.bounds.lengths / np.asarray(self.shape)

    @property
    def total(self) -> float:
        return float(self.values.sum())

    @property
    def n_cells(self) -> int:
        return self.shape[0] * self.shape[1] * self.shape[2]

    def copy(self) -> "CostMap":
        return CostMap(self.bounds, self.shape, self.values.copy())

    def cell_edges(self, axis: int) -> np.ndarray:
        lo, hi = self.bounds.lo[axis], self.bounds.hi[axis]
        n = self.shape[axis]
        edges = lo + (hi - lo) * np.arange(n + 1) / n
        edges[-1] = hi
        return edges

    def cell_index(self, positions) -> np.ndarray:
        """Integer ``(n, 3)`` cell indices; the upper boundary face maps to the last cell."""
        p = np.atleast_2d(np.asarray(positions, dtype=float))
        lo = np.asarray(self.bounds.lo)
        hi = np.asarray(self.bounds.hi)
        outside = np.any((p < lo) | (p > hi), axis=1)
        if outside.any():
            bad = p[np.argmax(outside)]
            raise OutOfDomainError(f"position {tuple(bad)} outside map bounds {self.bounds}")
        idx = np.floor((p - lo) / self.spacing).astype(np.int64)
        return np.minimum(idx, np.asarray(self.shape) - 1)

    def flat_index(self, positions) -> np.ndarray:
        idx = self.cell_index(positions)
        return np.ravel_multi_index(idx.T, self.shape)

    def merge(self, other: "CostMap") -> "CostMap":
        if other.bounds != self.bounds or other.shape != self.shape:
            raise ValueError("cannot merge maps with different grids")
        return CostMap(self.bounds, self.shape, self.values + other.values)

    def to_csv(self, path) -> None:
        """One ``i,j,k,value`` row per cell."""
        i, j, k = np.indices(self.shape).reshape(3, -1)
        with open(path, "w", newline="") as fh:
            fh.write("i,j,k,value\n")
            for row in zip(i, j, k, self.values.ravel()):
                fh.write("%d,%d,%d,%r\n" % (row[0], row[1], row[2], float(row[3])))


def new_cost_map(bounds: Box3, num_ranks: int, cells_per_rank: int = 1000) -> CostMap:
    """Zeroed map with at least ``num_ranks * cells_per_rank`` near-cubic cells."""
    if num_ranks < 1 or cells_per_rank < 1:
        raise ValueError("num_ranks and cells_per_rank must be positive")
    shape = grid_shape(bounds.lengths, num_ranks * cells_per_rank)
    return CostMap(bounds, shape, np.zeros(shape))


def deposit(cmap: CostMap, position, weight: float) -> CostMap:
    """Add ``weight`` to the cell containing ``position`` (in place)."""
    if weight < 0:
        raise ValueError("weight must be non-negative")
    idx = tuple(cmap.cell_index(position)[0])
    cmap.values[idx] += weight
    return cmap


def deposit_many(cmap: CostMap, positions, weights) -> CostMap:
    """Vectorized :func:`deposit`; ``weights`` may be a scalar."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(positions) == 0:
        return cmap
    weights = np.broadcast_to(np.asarray(weights, dtype=float), (len(positions),))
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    flat = cmap.flat_index(positions)
    cmap.values += np.bincount(flat, weights=weights, minlength=cmap.n_cells).reshape(cmap.shape)
    return cmap


def overlap_fractions(cmap: CostMap, region: Box3, axis: int) -> np.ndarray:
    """Fraction of each cell's width along ``axis`` that lies inside ``region``."""
    edges = cmap.cell_edges(axis)
    lo = np.maximum(edges[:-1], region.lo[axis])
    hi = np.minimum(edges[1:], region.hi[axis])
    return np.clip(hi - lo, 0.0, None) / np.diff(edges)


def deposit_box(cmap: CostMap, box: Box3, amount: float) -> CostMap:
    """Spread ``amount`` uniformly over ``box`` (cells weighted by overlap volume)."""
    if amount < 0:
        raise ValueError("amount must be non-negative")
    if amount == 0:
        return cmap
    w = [overlap_fractions(cmap, box, k) * np.diff(cmap.cell_edges(k)) for k in range(3)]
    vol = np.einsum("i,j,k->ijk", *w)
    cmap.values += amount * vol / vol.sum()
    return cmap


def integrate(cmap: CostMap, region: Box3) -> float:
    """Cost inside ``region`` assuming constant density within each map cell."""
    f = [overlap_fractions(cmap, region, k) for k in range(3)]
    return float(np.einsum("ijk,i,j,k->", cmap.values, *f))


def find_cut(cmap: CostMap, region: Box3, axis: int, target_fraction: float) -> float:
    """Position ``p`` along ``axis`` putting ``target_fraction`` of the region's cost below ``p``.

    Raises
    ------
    DegenerateRegionError
        If the region holds no cost.
    """
    if not 0.0 < target_fraction < 1.0:
        raise ValueError("target_fraction must lie strictly between 0 and 1")
    f = [overlap_fractions(cmap, region, k) for k in range(3)]
    others = [k for k in range(3) if k != axis]
    # cost per slab along the cut axis, restricted to the region on all axes
    slab = np.moveaxis(cmap.values, axis, 0)
    slab = np.einsum("ajk,j,k->a", slab, f[others[0]], f[others[1]]) * f[axis]
    total = slab.sum()
    if not total > 0.0:
        raise DegenerateRegionError(f"region {region} carries no cost")

    edges = cmap.cell_edges(axis)
    seg_lo = np.maximum(edges[:-1], region.lo[axis])
    seg_hi = np.minimum(edges[1:], region.hi[axis])
    cum = np.cumsum(slab)
    target = target_fraction * total
    i = int(np.searchsorted(cum, target, side="left"))
    i = min(i, len(slab) - 1)
    before = cum[i - 1] if i > 0 else 0.0
    frac = (target - before) / slab[i] if slab[i] > 0 else 0.0
    p = seg_lo[i] + min(max(frac, 0.0), 1.0) * (seg_hi[i] - seg_lo[i])
    lo, hi = region.lo[axis], region.hi[axis]
    if p <= lo:
        p = np.nextafter(lo, hi)
    elif p >= hi:
        p = np.nextafter(hi, lo)
    return float(p)
