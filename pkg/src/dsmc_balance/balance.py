"""Cost-map weights for each balancing strategy, the rebalance schedule, and
imbalance metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .costmap import CostMap, deposit_box, deposit_many, new_cost_map
from .geometry import Box3

log = logging.getLogger(__name__)

STRATEGIES = ("uniform", "particle", "timer_damped", "tacf")


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "tacf"
    damping: float | None = None
    # floor on the TACF per-particle weight, as a multiple of sum(T)/sum(N); 0 disables it
    weight_floor: float = 0.0

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.kind!r}; expected one of {STRATEGIES}")
        if (self.damping is not None) != (self.kind == "timer_damped"):
            raise ValueError("damping is required for timer_damped and only for it")
        if self.damping is not None and not 0.0 <= self.damping <= 1.0:
            raise ValueError("damping must lie in [0, 1]")
        if self.weight_floor < 0:
            raise ValueError("weight_floor must be non-negative")


@dataclass(frozen=True)
class RankTiming:
    rank: int
    time: float
    count: int

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("processor time must be non-negative")
        if self.count < 0:
            raise ValueError("particle count must be non-negative")


@dataclass(frozen=True)
class BalanceSchedule:
    early_interval: int = 25
    early_until: int = 100
    late_interval: int = 50
    stop_at: int = 900
    particle_cap: int = 50_000

    def __post_init__(self):
        for name in ("early_interval", "early_until", "late_interval", "stop_at", "particle_cap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.early_until > self.stop_at:
            raise ValueError("early_until must not exceed stop_at")


def particle_weight(timing: RankTiming) -> float:
    return 1.0


def tacf_weight(timing: RankTiming, floor: float = 0.0) -> float:
    """Per-particle deposit ``T/N`` (0 for an empty rank, which deposits by volume instead)."""
    if timing.count == 0:
        return 0.0
    return max(timing.time / timing.count, floor)


def damped_times(timings: Sequence[RankTiming], damping: float) -> np.ndarray:
    """``damping * T_r + (1 - damping) * mean(T)`` for each rank."""
    if not 0.0 <= damping <= 1.0:
        raise ValueError("damping must lie in [0, 1]")
    if len(timings) == 0:
        raise ValueError("need at least one rank")
    t = np.array([tm.time for tm in timings])
    return damping * t + (1.0 - damping) * t.mean()


def timer_damped_weights(timings: Sequence[RankTiming], damping: float, boxes: Sequence[Box3]):
    """Per-rank cost density (s/m^3) spread uniformly over each rank's box."""
    eff = damped_times(timings, damping)
    return eff / np.array([b.volume for b in boxes])


def should_rebalance(step: int, schedule: BalanceSchedule, max_rank_particles: int) -> bool:
    if step > schedule.stop_at:
        return False
    if max_rank_particles > schedule.particle_cap:
        return True
    if step <= schedule.early_until:
        return step % schedule.early_interval == 0
    return step % schedule.late_interval == 0


@dataclass(frozen=True)
class ImbalanceMetrics:
    mean_time: float
    max_time: float
    imbalance_ratio: float
    times: np.ndarray

    def fraction_within(self, tol: float) -> float:
        return float(np.mean(np.abs(self.times - self.mean_time) <= tol * self.mean_time))


def imbalance_metrics(times) -> ImbalanceMetrics:
    """Accepts processor times or :class:`RankTiming` records."""
    t = np.array([x.time if isinstance(x, RankTiming) else x for x in times], dtype=float)
    if t.size == 0:
        raise ValueError("need at least one rank")
    mean = float(t.mean())
    if mean == 0:
        raise ZeroDivisionError("imbalance ratio undefined when mean processor time is zero")
    return ImbalanceMetrics(mean, float(t.max()), float(t.max()) / mean, t)


def rank_cost_map(template: CostMap, strategy: StrategyConfig, timing: RankTiming, box: Box3,
                  positions, effective_time: float | None = None, weight_floor: float = 0.0) -> CostMap:
    """One rank's private contribution to the cost map.

    ``effective_time`` is the damped time for ``timer_damped``; ``weight_floor``
    is the absolute TACF floor in seconds per particle.
    """
    cmap = CostMap(template.bounds, template.shape, np.zeros(template.shape))
    kind = strategy.kind
    if kind == "particle":
        deposit_many(cmap, positions, particle_weight(timing))
    elif kind == "tacf":
        if timing.count == 0:
            deposit_box(cmap, box, timing.time)
        else:
            deposit_many(cmap, positions, tacf_weight(timing, weight_floor))
    elif kind == "timer_damped":
        deposit_box(cmap, box, timing.time if effective_time is None else effective_time)
    else:
        deposit_box(cmap, box, box.volume / template.bounds.volume)
    return cmap


def build_cost_map(bounds: Box3, num_ranks: int, cells_per_rank: int, strategy: StrategyConfig,
                   timings: Sequence[RankTiming], boxes: Sequence[Box3], positions: Sequence) -> CostMap:
    """Merge every rank's deposits (in rank order) into one map.

    ``positions[r]`` are rank ``r``'s particle positions. A map with zero total
    is replaced by the uniform map.
    """
    cmap = new_cost_map(bounds, num_ranks, cells_per_rank)
    if strategy.kind == "uniform":
        cmap.values[...] = 1.0
        return cmap
    eff = damped_times(timings, strategy.damping) if strategy.kind == "timer_damped" else None
    floor = 0.0
    if strategy.kind == "tacf" and strategy.weight_floor > 0:
        total_n = sum(t.count for t in timings)
        if total_n:
            floor = strategy.weight_floor * sum(t.time for t in timings) / total_n
    for r, timing in enumerate(timings):
        part = rank_cost_map(cmap, strategy, timing, boxes[r], positions[r],
                             None if eff is None else float(eff[r]), floor)
        cmap.values += part.values
    if not cmap.total > 0:
        log.warning("cost map for strategy %s is empty; using the uniform map", strategy.kind)
        cmap.values[...] = 1.0
    return cmap
