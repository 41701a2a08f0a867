"""Time-step loop over in-process simulated ranks.

Each step, every rank collides, creates and moves its particles inside its
timer window; migration to new owners happens after the window closes.
Ranks share no mutable state, so the per-rank phase may run on a thread pool
without changing results.
"""

from __future__ import annotations

import copy
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernel
from .balance import (
    RankTiming,
    StrategyConfig,
    build_cost_map,
    imbalance_metrics,
    should_rebalance,
)
from .costmap import CostMap, OutOfDomainError
from .geometry import Box3
from .kernel import CollisionGrid, DomainSpec, GasModel
from .rcb import CutTree, rcb_partition


@dataclass(frozen=True)
class SyntheticCostModel:
    """Deterministic stand-in for processor timers, linear in per-step work.

    Particles moved inside ``expensive_region`` cost ``expensive_factor`` times
    ``a_move``.
    """

    a_move: float = 1.0
    a_pair: float = 4.0
    a_create: float = 2.0
    a_fixed: float = 0.0
    expensive_region: Box3 | None = None
    expensive_factor: float = 1.0

    def __post_init__(self):
        if min(self.a_move, self.a_pair, self.a_create, self.a_fixed) < 0:
            raise ValueError("cost coefficients must be non-negative")
        if self.expensive_factor < 0:
            raise ValueError("expensive_factor must be non-negative")


@dataclass
class StepActivity:
    moved: int = 0
    moved_in_region: int = 0
    candidates: int = 0
    collisions: int = 0
    created: int = 0
    exited: int = 0


def synthetic_rank_time(model: SyntheticCostModel, activity: StepActivity) -> float:
    moved = activity.moved + (model.expensive_factor - 1.0) * activity.moved_in_region
    return (
        model.a_fixed
        + model.a_move * moved
        + model.a_pair * activity.candidates
        + model.a_create * activity.created
    )


@dataclass
class RankState:
    rank: int
    box: Box3
    positions: np.ndarray
    velocities: np.ndarray
    grid: CollisionGrid
    rng: np.random.Generator
    last_timing: RankTiming | None = None

    @property
    def count(self) -> int:
        return len(self.positions)


@dataclass
class StepTimings:
    step: int
    per_rank: list
    wall_clock: float
    created: int = 0
    exited: int = 0
    migrated: int = 0
    total_particles: int = 0
    activity: list = field(default_factory=list, repr=False)

    @property
    def times(self) -> np.ndarray:
        return np.array([t.time for t in self.per_rank])

    @property
    def counts(self) -> np.ndarray:
        return np.array([t.count for t in self.per_rank])


@dataclass
class World:
    domain: DomainSpec
    gas: GasModel
    dt: float
    tree: CutTree
    ranks: list
    inlet_rng: np.random.Generator
    cost_model: SyntheticCostModel | None = None
    map_cells_per_rank: int = 1000
    collision_cells_per_rank: int = 500
    sigma_cr_init: float = 1.0e-15
    workers: int = 1
    step_count: int = 0

    @property
    def num_ranks(self) -> int:
        return len(self.ranks)

    @property
    def total_particles(self) -> int:
        return sum(r.count for r in self.ranks)

    def all_particles(self):
        pos = np.concatenate([r.positions for r in self.ranks]) if self.ranks else np.empty((0, 3))
        vel = np.concatenate([r.velocities for r in self.ranks]) if self.ranks else np.empty((0, 3))
        return pos, vel


def default_sigma_cr(gas: GasModel, temperature: float, safety: float = 5.0) -> float:
    """``safety * sigma(c_mp) * c_mp`` at the given temperature."""
    c_mp = gas.most_probable_speed(temperature)
    return safety * kernel.vhs_cross_section(c_mp, gas) * c_mp


def make_world(domain: DomainSpec, gas: GasModel, dt: float, num_ranks: int, seed: int = 0,
               cost_model: SyntheticCostModel | None = None, map_cells_per_rank: int = 1000,
               collision_cells_per_rank: int = 500, sigma_safety: float = 5.0,
               workers: int = 1) -> World:
    """Empty world decomposed by RCB over a constant cost map."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    seeds = np.random.SeedSequence(seed).spawn(num_ranks + 1)
    world = World(
        domain=domain,
        gas=gas,
        dt=dt,
        tree=None,
        ranks=[],
        inlet_rng=np.random.default_rng(seeds[0]),
        cost_model=cost_model,
        map_cells_per_rank=map_cells_per_rank,
        collision_cells_per_rank=collision_cells_per_rank,
        sigma_cr_init=default_sigma_cr(gas, domain.inlet.temperature, sigma_safety),
        workers=workers,
    )
    cmap = build_cost_map(domain.bounds, num_ranks, map_cells_per_rank,
                          StrategyConfig("uniform"), [], [], [])
    world.tree = rcb_partition(cmap, num_ranks)
    for r in range(num_ranks):
        box = world.tree.boxes[r]
        world.ranks.append(RankState(
            rank=r,
            box=box,
            positions=np.empty((0, 3)),
            velocities=np.empty((0, 3)),
            grid=CollisionGrid(box, collision_cells_per_rank, world.sigma_cr_init),
            rng=np.random.default_rng(seeds[r + 1]),
        ))
    return world


def load_particles(world: World, positions, velocities) -> None:
    """Replace the world's particles, handing each to its owner."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    velocities = np.asarray(velocities, dtype=float).reshape(-1, 3)
    owners = world.tree.owners(positions)
    for rs in world.ranks:
        mine = owners == rs.rank
        rs.positions = positions[mine].copy()
        rs.velocities = velocities[mine].copy()


def _rank_phase(world: World, rs: RankState, new_positions: np.ndarray):
    """Collide, create, move. Returns ``(activity, elapsed, departures)``."""
    start = time.perf_counter()
    act = StepActivity()
    gas, dt, bounds = world.gas, world.dt, world.domain.bounds
    pos, vel = rs.positions, rs.velocities

    if len(pos) > 1:
        act.candidates, act.collisions = rs.grid.collide(pos, vel, dt, gas, rs.rng)

    act.created = len(new_positions)
    if act.created:
        new_vel = kernel.sample_inlet_velocities(world.domain.inlet, gas, act.created, rs.rng)
        new_pos, new_vel = kernel.insert(new_positions, new_vel, dt, bounds, rs.rng)
        act.exited += act.created - len(new_pos)
    else:
        new_pos, new_vel = np.empty((0, 3)), np.empty((0, 3))

    act.moved = len(pos)
    model = world.cost_model
    if model is not None and model.expensive_region is not None and act.moved:
        act.moved_in_region = int(model.expensive_region.contains(pos).sum())
    inside = kernel.advect(pos, vel, dt, bounds)
    act.exited += int(act.moved - inside.sum())
    pos = np.concatenate([pos[inside], new_pos])
    vel = np.concatenate([vel[inside], new_vel])
    elapsed = time.perf_counter() - start

    stay = rs.box.contains(pos)
    # particles on a shared upper face belong to the neighbour
    on_upper = np.any(pos == np.asarray(rs.box.hi), axis=1) & stay
    if on_upper.any():
        stay[on_upper] = world.tree.owners(pos[on_upper]) == rs.rank
    rs.positions, rs.velocities = pos[stay], vel[stay]
    return act, elapsed, (pos[~stay], vel[~stay])


def migrate(departures, tree: CutTree):
    """Deliver each departed particle to its owner.

    ``departures`` is a per-rank list of ``(positions, velocities)``; inboxes
    preserve source-rank order.
    """
    n = tree.num_ranks
    if not departures or all(len(p) == 0 for p, _ in departures):
        return [(np.empty((0, 3)), np.empty((0, 3))) for _ in range(n)]
    pos = np.concatenate([p for p, _ in departures])
    vel = np.concatenate([v for _, v in departures])
    try:
        owners = tree.owners(pos)
    except OutOfDomainError as exc:
        raise RuntimeError("departed particle has no owner") from exc
    order = np.argsort(owners, kind="stable")
    bounds = np.searchsorted(owners[order], np.arange(n + 1))
    return [(pos[order[bounds[r]:bounds[r + 1]]], vel[order[bounds[r]:bounds[r + 1]]]) for r in range(n)]


def step(world: World, density_scale: float = 1.0, pool: ThreadPoolExecutor | None = None) -> StepTimings:
    """Advance one time step and return the per-rank timings."""
    t0 = time.perf_counter()
    world.step_count += 1
    inlet = world.domain.inlet
    expected = kernel.inflow_count(inlet, world.dt, world.gas, density_scale)
    n_new = int(world.inlet_rng.poisson(expected)) if expected > 0 else 0
    new_pos = kernel.sample_inlet_positions(inlet, n_new, world.inlet_rng)
    owners = world.tree.owners(new_pos)
    batches = [new_pos[owners == r] for r in range(world.num_ranks)]

    real_timer = world.cost_model is None
    jobs = [(world, rs, batches[rs.rank]) for rs in world.ranks]
    if pool is not None:
        results = list(pool.map(lambda a: _rank_phase(*a), jobs))
    else:
        results = [_rank_phase(*a) for a in jobs]

    inboxes = migrate([res[2] for res in results], world.tree)
    migrated = 0
    for rs, (p, v) in zip(world.ranks, inboxes):
        if len(p):
            rs.positions = np.concatenate([rs.positions, p])
            rs.velocities = np.concatenate([rs.velocities, v])
            migrated += len(p)

    per_rank = []
    for rs, (act, elapsed, _) in zip(world.ranks, results):
        t = elapsed if real_timer else synthetic_rank_time(world.cost_model, act)
        timing = RankTiming(rs.rank, t, act.moved + act.created)
        rs.last_timing = timing
        per_rank.append(timing)
    times = [t.time for t in per_rank]
    wall = time.perf_counter() - t0 if real_timer else max(times)
    return StepTimings(
        step=world.step_count,
        per_rank=per_rank,
        wall_clock=wall,
        created=sum(a.created for a, _, _ in results),
        exited=sum(a.exited for a, _, _ in results),
        migrated=migrated,
        total_particles=world.total_particles,
        activity=[a for a, _, _ in results],
    )


@dataclass
class RebalanceResult:
    tree: CutTree
    cost_map: CostMap
    migrated: int


def rebalance(world: World, strategy: StrategyConfig, times=None) -> RebalanceResult:
    """Build a cost map, repartition with RCB, and redistribute every particle.

    ``times`` are the per-rank processor times to use (default: each rank's
    last timing). The map weights use each rank's current particle count, so a
    rank's TACF deposits sum to exactly its time.
    """
    if times is None:
        times = [rs.last_timing.time if rs.last_timing else 0.0 for rs in world.ranks]
    timings = [RankTiming(rs.rank, float(t), rs.count) for rs, t in zip(world.ranks, times)]
    boxes = [rs.box for rs in world.ranks]
    cmap = build_cost_map(world.domain.bounds, world.num_ranks, world.map_cells_per_rank, strategy,
                          timings, boxes, [rs.positions for rs in world.ranks])
    tree = rcb_partition(cmap, world.num_ranks)

    pos, vel = world.all_particles()
    old = np.concatenate([np.full(rs.count, rs.rank) for rs in world.ranks]) if pos.size else np.empty(0, int)
    owners = tree.owners(pos)
    migrated = int(np.count_nonzero(owners != old))
    world.tree = tree
    for rs in world.ranks:
        mine = owners == rs.rank
        rs.positions = pos[mine]
        rs.velocities = vel[mine]
        rs.box = tree.boxes[rs.rank]
        rs.grid = CollisionGrid(rs.box, world.collision_cells_per_rank, world.sigma_cr_init)
    return RebalanceResult(tree, cmap, migrated)


def probe_timings(world: World, density_scale: float = 1.0) -> StepTimings:
    """Timings of one step taken on a copy of ``world``; the world itself is untouched."""
    return step(copy.deepcopy(world), density_scale)


def check_ownership(world: World) -> bool:
    for rs in world.ranks:
        if rs.count and not np.all(world.tree.owners(rs.positions) == rs.rank):
            return False
    return True


@dataclass
class RunResult:
    series: list
    world: World
    rebalance_steps: list
    cost_maps: dict = field(default_factory=dict, repr=False)
    post_rebalance_counts: dict = field(default_factory=dict)


def run(config, on_step=None) -> RunResult:
    """Execute ``config.run.steps`` steps with scheduled rebalancing.

    ``on_step(timings, rebalanced, result)`` is called after every step.
    """
    world = config.build_world()
    strategy = config.strategy()
    schedule = config.schedule()
    history = deque(maxlen=config.balance.history)
    result = RunResult([], world, [])
    pool = ThreadPoolExecutor(config.run.workers) if config.run.workers > 1 else None
    try:
        for n in range(1, config.run.steps + 1):
            scale = config.inlet.ramp_fraction if n <= config.inlet.ramp_steps else 1.0
            timings = step(world, scale, pool)
            history.append(timings.times)
            rebalanced = should_rebalance(n, schedule, max(rs.count for rs in world.ranks))
            rb = None
            if rebalanced:
                times = np.mean(np.asarray(history), axis=0)
                rb = rebalance(world, strategy, times)
                timings.migrated += rb.migrated
                history.clear()
                result.rebalance_steps.append(n)
                result.post_rebalance_counts[n] = [rs.count for rs in world.ranks]
                if config.output.dump_costmaps:
                    result.cost_maps[n] = rb.cost_map
            result.series.append(timings)
            if on_step is not None:
                on_step(timings, rebalanced, rb)
    finally:
        if pool is not None:
            pool.shutdown()
    return result


def summarize(series, window: int = 50) -> dict:
    """Steady-state statistics over the last ``window`` steps."""
    if not series:
        raise ValueError("empty series")
    tail = series[-window:]
    ratios, means, maxes = [], [], []
    for t in tail:
        m = imbalance_metrics(t.times)
        ratios.append(m.imbalance_ratio)
        means.append(m.mean_time)
        maxes.append(m.max_time)
    rank_times = np.mean([t.times for t in tail], axis=0)
    rank_counts = np.mean([t.counts for t in tail], axis=0)
    return {
        "window": len(tail),
        "mean_T": float(np.mean(means)),
        "max_T": float(np.mean(maxes)),
        "wall_clock": float(np.mean([t.wall_clock for t in tail])),
        "imbalance_ratio": float(np.mean(ratios)),
        "rank_times": rank_times,
        "rank_counts": rank_counts,
    }
