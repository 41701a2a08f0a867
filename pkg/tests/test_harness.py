import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from dsmc_balance.balance import RankTiming
from dsmc_balance.cli import main
from dsmc_balance.config import ExperimentConfig, scenario_path, serialize_config
from dsmc_balance.harness import (
    RANK_COLUMNS,
    STEP_COLUMNS,
    compare_strategies,
    emit_rank_csv,
    emit_step_csv,
    read_step_csv,
    run_experiment,
)
from dsmc_balance.runtime import StepTimings

GOLDEN = Path(__file__).parent / "golden"


def timings(step, times, total=0, migrated=0):
    per_rank = [RankTiming(r, t, 0) for r, t in enumerate(times)]
    return StepTimings(step, per_rank, max(times), 0, 0, migrated, total, [])


def small(**kw):
    base = dict(ranks=4, steps=30, ramp_steps=5, early_interval=10, early_until=20, late_interval=10,
                stop_at=30, summary_window=10)
    base.update(kw)
    return ExperimentConfig().replace(**base)


def test_step_csv_golden(tmp_path):
    series = [timings(1, [0.1], total=7), timings(2, [0.1], total=9, migrated=3)]
    emit_step_csv(series, [2], tmp_path / "steps.csv")
    assert (tmp_path / "steps.csv").read_bytes() == (GOLDEN / "steps_two_rows.csv").read_bytes()


def test_rank_csv_golden(tmp_path):
    emit_rank_csv([0.25, 0.5], [10, 0], tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_bytes() == (GOLDEN / "ranks_two.csv").read_bytes()


def test_headers():
    assert ",".join(STEP_COLUMNS) == (GOLDEN / "steps_two_rows.csv").read_text().splitlines()[0]
    assert RANK_COLUMNS == ("rank", "T_s", "N")


def test_zero_steps_header_only(tmp_path):
    summary = run_experiment(small(steps=0), tmp_path)
    assert (tmp_path / "steps.csv").read_text() == ",".join(STEP_COLUMNS) + "\n"
    assert summary["steps"] == 0
    assert not list(tmp_path.glob("ranks_*.csv"))


def test_single_rank_ratio_is_one(tmp_path):
    summary = run_experiment(small(ranks=1, steps=12), tmp_path)
    assert summary["imbalance_ratio"] == 1.0
    assert np.all(read_step_csv(tmp_path / "steps.csv")["imbalance_ratio"] == 1.0)


def test_outputs_and_summary_window(tmp_path):
    cfg = small(dump_costmaps=True, rank_files="rebalance")
    summary = run_experiment(cfg, tmp_path)
    rows = read_step_csv(tmp_path / "steps.csv")
    assert rows["step"].tolist() == list(range(1, 31))
    flagged = rows["step"][rows["rebalanced"] == 1].astype(int).tolist()
    assert flagged == summary["rebalance_steps"] == [10, 20, 30]
    for s in flagged:
        assert (tmp_path / f"costmap_{s}.csv").exists()
        assert (tmp_path / f"ranks_{s}.csv").exists()
    tail = slice(-10, None)
    assert summary["mean_T"] == pytest.approx(rows["mean_T_s"][tail].mean(), rel=1e-12)
    assert summary["max_T"] == pytest.approx(rows["max_T_s"][tail].mean(), rel=1e-12)
    assert summary["wall_clock"] == pytest.approx(rows["wall_clock_s"][tail].mean(), rel=1e-12)
    assert summary["imbalance_ratio"] == pytest.approx(rows["imbalance_ratio"][tail].mean(), rel=1e-12)
    assert json.loads((tmp_path / "summary.json").read_text())["steps"] == 30
    ranks = np.genfromtxt(tmp_path / "ranks_30.csv", delimiter=",", names=True)
    assert ranks["rank"].tolist() == [0, 1, 2, 3]


def test_comparison_identical_until_first_rebalance(tmp_path):
    cfg = small(steps=25)
    compare_strategies(cfg, ["particle", "tacf"], tmp_path)
    a = read_step_csv(tmp_path / "particle" / "steps.csv")
    b = read_step_csv(tmp_path / "tacf" / "steps.csv")
    first = 10
    np.testing.assert_array_equal(a["total_particles"][:first], b["total_particles"][:first])
    np.testing.assert_array_equal(a["mean_T_s"][:first], b["mean_T_s"][:first])


# --- command line -----------------------------------------------------------

def write_cfg(path, **kw):
    path.write_text(serialize_config(small(**kw)))
    return str(path)


def test_cli_success_and_overrides(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.cfg")
    out = tmp_path / "out"
    code = main(["run", cfg, "--ranks", "2", "--steps", "5", "--strategy", "particle", "--seed", "9",
                 "--out", str(out), "--dump-costmaps", "--timer", "synthetic"])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert (summary["ranks"], summary["steps"], summary["strategy"], summary["seed"]) == (2, 5, "particle", 9)
    assert "imbalance_ratio=" in capsys.readouterr().out


def test_cli_config_errors(tmp_path):
    assert main(["run", str(tmp_path / "missing.cfg")]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("ranks = 3\n")
    assert main(["run", str(bad)]) == 1
    assert main(["run", write_cfg(tmp_path / "c.cfg"), "--ranks", "6"]) == 1


def test_cli_runtime_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory")
    assert main(["run", write_cfg(tmp_path / "c.cfg"), "--out", str(blocker / "sub")]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dsmc_balance", "run", str(scenario_path("desk_jet")),
                           "--steps", "3", "--ranks", "2", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "steps.csv").exists()
