"""Axis-aligned boxes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

AXES = "xyz"


@dataclass(frozen=True)
class Box3:
    """Closed axis-aligned box ``[lo, hi]`` in metres."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("Box3 needs three coordinates per corner")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box: lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, edge: float, origin=(0.0, 0.0, 0.0)) -> "Box3":
        return cls(tuple(origin), tuple(o + edge for o in origin))

    @property
    def lengths(self) -> np.ndarray:
        return np.subtract(self.hi, self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def centroid(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))

    def longest_axis(self) -> int:
        """Index of the longest edge; ties go to x, then y, then z."""
        lengths = self.lengths
        best = 0
        for k in (1, 2):
            if lengths[k] > lengths[best]:
                best = k
        return best

    def split(self, axis: int, position: float) -> tuple["Box3", "Box3"]:
        lo_hi = list(self.hi)
        hi_lo = list(self.lo)
        lo_hi[axis] = position
        hi_lo[axis] = position
        return Box3(self.lo, tuple(lo_hi)), Box3(tuple(hi_lo), self.hi)

    def contains(self, points) -> np.ndarray:
        """Closed containment test for an ``(n, 3)`` array (or one point)."""
        p = np.asarray(points, dtype=float)
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)

    def interiors_overlap(self, other: "Box3") -> bool:
        return all(
            min(self.hi[k], other.hi[k]) > max(self.lo[k], other.lo[k]) for k in range(3)
        )
