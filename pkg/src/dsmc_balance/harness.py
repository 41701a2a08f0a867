"""Experiment driver and CSV/summary output."""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path

import numpy as np

from .balance import imbalance_metrics
from .config import ExperimentConfig
from .runtime import RunResult, StepTimings, run, summarize

log = logging.getLogger(__name__)

STEP_COLUMNS = (
    "step",
    "mean_T_s",
    "max_T_s",
    "wall_clock_s",
    "imbalance_ratio",
    "total_particles",
    "migrated_particles",
    "rebalanced",
)
RANK_COLUMNS = ("rank", "T_s", "N")


def step_row(timings: StepTimings, rebalanced: bool) -> list:
    times = timings.times
    mean = float(times.mean())
    ratio = float(times.max()) / mean if mean > 0 else float("nan")
    return [
        timings.step,
        repr(mean),
        repr(float(times.max())),
        repr(float(timings.wall_clock)),
        repr(ratio),
        timings.total_particles,
        timings.migrated,
        int(rebalanced),
    ]


def emit_step_csv(series, rebalance_steps, path) -> None:
    rebalance_steps = set(rebalance_steps)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(STEP_COLUMNS) + "\n")
        for t in series:
            fh.write(",".join(str(v) for v in step_row(t, t.step in rebalance_steps)) + "\n")


def emit_rank_csv(times, counts, path) -> None:
    """Per-rank processor time and particle count, in rank order."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(RANK_COLUMNS) + "\n")
        for r, (t, n) in enumerate(zip(times, counts)):
            fh.write(f"{r},{float(t)!r},{n}\n")


def read_step_csv(path) -> dict:
    data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
    return {name: data[name] for name in data.dtype.names}


def build_summary(config: ExperimentConfig, result: RunResult) -> dict:
    series = result.series
    summary = {
        "strategy": config.balance.strategy,
        "ranks": config.run.ranks,
        "seed": config.run.seed,
        "steps": len(series),
        "rebalance_steps": result.rebalance_steps,
    }
    if not series:
        return summary
    stats = summarize(series, config.output.summary_window)
    rank_times = stats.pop("rank_times")
    rank_counts = stats.pop("rank_counts")
    summary.update(stats)
    if rank_times.mean() > 0:
        spread = imbalance_metrics(rank_times)
        summary["window_rank_imbalance_ratio"] = spread.imbalance_ratio
        summary["fraction_within_10pct"] = spread.fraction_within(0.10)
        summary["fraction_within_15pct"] = spread.fraction_within(0.15)
        summary["fraction_within_20pct"] = spread.fraction_within(0.20)
    summary["final_total_particles"] = series[-1].total_particles
    summary["final_max_rank_particles"] = int(rank_counts.max())
    summary["final_mean_rank_particles"] = float(rank_counts.mean())
    if result.rebalance_steps:
        last = result.rebalance_steps[-1]
        counts = np.asarray(result.post_rebalance_counts[last])
        summary["last_rebalance_step"] = last
        summary["last_rebalance_max_particles"] = int(counts.max())
        summary["last_rebalance_min_particles"] = int(counts.min())
        summary["last_rebalance_mean_particles"] = float(counts.mean())
    return summary


def run_experiment(config: ExperimentConfig, out_dir=None, quiet: bool = True) -> dict:
    """Run ``config`` and write ``steps.csv``, rank files, cost maps and ``summary.json``."""
    out = Path(out_dir if out_dir is not None else config.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    rank_mode = config.output.rank_files
    t0 = time.perf_counter()

    def on_step(timings, rebalanced, rb):
        if rebalanced and rank_mode == "rebalance":
            emit_rank_csv(timings.times, timings.counts, out / f"ranks_{timings.step}.csv")
        if rb is not None and config.output.dump_costmaps:
            rb.cost_map.to_csv(out / f"costmap_{timings.step}.csv")
        if not quiet and timings.step % 50 == 0:
            log.info("step %d: %d particles", timings.step, timings.total_particles)

    result = run(config, on_step)
    emit_step_csv(result.series, result.rebalance_steps, out / "steps.csv")
    summary = build_summary(config, result)
    if result.series and rank_mode != "none":
        window = result.series[-config.output.summary_window:]
        times = np.mean([t.times for t in window], axis=0)
        counts = result.series[-1].counts
        emit_rank_csv(times, counts, out / f"ranks_{result.series[-1].step}.csv")
    summary["runtime_s"] = time.perf_counter() - t0
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def compare_strategies(config: ExperimentConfig, strategies, out_dir) -> dict:
    """Run the same config once per strategy, each into ``out_dir/<strategy>``."""
    out = Path(out_dir)
    return {
        s: run_experiment(config.replace(strategy=s), out / s)
        for s in strategies
    }
