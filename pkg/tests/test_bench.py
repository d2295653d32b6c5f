import json
import os

import pytest

from deskcrew.bench import BenchConfig, Metrics, aggregate, load_episode, run_bench, write_summary
from deskcrew.dialog import EpisodeLog, ProtocolParams, recompute_metrics


def _log(success, steps, replans):
    return EpisodeLog(
        task_id="sort_blocks",
        seed=0,
        condition="dialog",
        events=[],
        metrics={"success": success, "steps": steps, "rounds": steps, "mean_replans": replans},
    )


def test_aggregate_simple_arithmetic():
    m = aggregate([_log(True, 4, 1.0), _log(True, 6, 1.0)])
    assert m.success_rate == 1.0
    assert m.mean_steps == 5.0
    assert m.success_stderr == 0.0


def test_aggregate_steps_over_successes_only():
    m = aggregate([_log(True, 4, 1.0), _log(False, 9, 3.0)])
    assert m.mean_steps == 4.0
    assert m.success_rate == 0.5
    # sample variance of [1, 0] is 0.5, so stderr = sqrt(0.5 / 2)
    assert m.success_stderr == pytest.approx(0.5, abs=1e-12)


def test_aggregate_replans_over_all_runs():
    m = aggregate([_log(True, 4, 1.0), _log(False, 0, 5.0)])
    assert m.mean_replans == 3.0


def test_aggregate_no_successes_gives_none_steps():
    m = aggregate([_log(False, 0, 2.0)])
    assert m.mean_steps is None


def test_aggregate_empty_raises():
    with pytest.raises(ValueError):
        aggregate([])


def test_run_bench_writes_and_resumes(tmp_path):
    config = BenchConfig(
        task_id="sort_blocks",
        condition="dialog",
        seeds=[0, 1, 2],
        results_dir=str(tmp_path),
        max_workers=2,
    )
    logs = run_bench(config)
    assert len(logs) == 3
    assert all(log.metrics["success"] for log in logs)
    paths = [config.episode_path(s) for s in config.seeds]
    assert all(os.path.exists(p) for p in paths)
    stamps = [os.path.getmtime(p) for p in paths]

    # second run must not re-execute anything
    logs2 = run_bench(config)
    assert [os.path.getmtime(p) for p in paths] == stamps
    assert [l.metrics["success"] for l in logs2] == [l.metrics["success"] for l in logs]

    metrics = aggregate(logs)
    assert metrics.success_rate == 1.0
    path = write_summary(config, metrics)
    with open(path) as f:
        lines = f.read().strip().splitlines()
    assert lines[0].startswith("task,condition")
    assert lines[1].startswith("sort_blocks,dialog,3,1.000")


def test_loaded_episode_metrics_match_recompute(tmp_path):
    config = BenchConfig(
        task_id="stack_order", seeds=[4], results_dir=str(tmp_path), max_workers=1
    )
    (log,) = run_bench(config)
    loaded = load_episode(config.episode_path(4))
    rc = recompute_metrics(loaded.events)
    for key in ("success", "steps", "rounds", "mean_replans"):
        assert rc[key] == log.metrics[key]
    assert [e["type"] for e in loaded.events] == [e["type"] for e in log.events]


def test_bench_config_rejects_unknowns():
    with pytest.raises(ValueError):
        BenchConfig(task_id="juggle")
    with pytest.raises(ValueError):
        BenchConfig(task_id="sort_blocks", condition="mystery")


def test_metrics_serialization_roundtrip():
    m = Metrics(n=3, success_rate=1.0, success_stderr=0.0, mean_steps=5.5, mean_replans=1.2)
    assert json.loads(json.dumps(m.to_dict()))["mean_steps"] == 5.5
