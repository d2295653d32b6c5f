"""Batch evaluation: seed sweeps per task and condition, metric aggregation.

Results land in ``<results>/<task>/<condition>/<seed>.jsonl`` (one event per
line); reruns skip seeds that already have a log on disk, so sweeps are
resumable. A summary CSV mirrors the table layout used for live comparisons.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .agents import make_backend
from .dialog import EpisodeLog, ProtocolParams, recompute_metrics, run_episode
from .world import TASKS

CONDITIONS = ("dialog", "no_history", "no_feedback", "central")


@dataclass
class BenchConfig:
    task_id: str
    condition: str = "dialog"
    seeds: list[int] = field(default_factory=lambda: list(range(20)))
    params: ProtocolParams = field(default_factory=ProtocolParams)
    backend_specs: dict[str, dict] = field(default_factory=dict)  # speaker -> backend config
    results_dir: str = "results"
    max_workers: int = 4

    def __post_init__(self):
        if self.task_id not in TASKS:
            raise ValueError(f"unknown task {self.task_id!r}")
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {self.condition!r}; pick one of {CONDITIONS}")
        if not self.backend_specs:
            speakers = ("Central",) if self.condition == "central" else TASKS[self.task_id].roster
            self.backend_specs = {
                s: {"kind": "scripted", "policy_id": f"oracle:{self.task_id}"} for s in speakers
            }

    def episode_path(self, seed: int) -> str:
        return os.path.join(self.results_dir, self.task_id, self.condition, f"{seed}.jsonl")


@dataclass
class Metrics:
    n: int
    success_rate: float
    success_stderr: float
    mean_steps: float | None  # successful runs only
    mean_replans: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "success_rate": self.success_rate,
            "success_stderr": self.success_stderr,
            "mean_steps": self.mean_steps,
            "mean_replans": self.mean_replans,
        }


def load_episode(path: str) -> EpisodeLog:
    events = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    metrics = next((e["payload"] for e in reversed(events) if e["type"] == "metrics"), None)
    if metrics is None:
        metrics = recompute_metrics(events)
    task_id = next((e["payload"].get("task_id") for e in events if e["type"] == "scene"), "")
    seed = next((e["payload"].get("rng_seed", 0) for e in events if e["type"] == "scene"), 0)
    return EpisodeLog(task_id=task_id, seed=seed, condition="", events=events, metrics=metrics)


def run_bench(config: BenchConfig) -> list[EpisodeLog]:
    """One episode per seed; completed seeds are loaded from disk, not re-run."""
    os.makedirs(os.path.dirname(config.episode_path(0)), exist_ok=True)

    def one(seed: int) -> EpisodeLog:
        path = config.episode_path(seed)
        if os.path.exists(path):
            return load_episode(path)
        backends = {name: make_backend(spec) for name, spec in config.backend_specs.items()}
        try:
            return run_episode(
                config.task_id,
                backends,
                config.params,
                seed=seed,
                condition=config.condition,
                log_path=path,
            )
        except Exception as e:  # per-episode failures are recorded, not fatal
            events = [{"type": "error", "payload": {"detail": str(e)}, "round": 0, "timestamp": 0}]
            with open(path, "w") as f:
                for ev in events:
                    f.write(json.dumps(ev) + "\n")
            metrics = {"success": False, "steps": 0, "rounds": 0, "mean_replans": 0.0, "failed_on_error": True}
            return EpisodeLog(config.task_id, seed, config.condition, events, metrics)

    if config.max_workers <= 1:
        logs = [one(s) for s in config.seeds]
    else:
        with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
            logs = list(pool.map(one, config.seeds))
    return logs


def aggregate(logs: list[EpisodeLog]) -> Metrics:
    """Success rate with stderr, steps over successful runs, replans over all runs."""
    if not logs:
        raise ValueError("aggregate() needs at least one episode log")
    successes = [1.0 if log.metrics.get("success") else 0.0 for log in logs]
    n = len(successes)
    rate = sum(successes) / n
    if n > 1:
        var = sum((s - rate) ** 2 for s in successes) / (n - 1)
        stderr = math.sqrt(var / n)
    else:
        stderr = 0.0
    steps = [log.metrics["steps"] for log in logs if log.metrics.get("success")]
    mean_steps = (sum(steps) / len(steps)) if steps else None
    replans = [log.metrics.get("mean_replans", 0.0) for log in logs]
    mean_replans = sum(replans) / len(replans)
    return Metrics(n=n, success_rate=rate, success_stderr=stderr, mean_steps=mean_steps, mean_replans=mean_replans)


def write_summary(config: BenchConfig, metrics: Metrics) -> str:
    path = os.path.join(config.results_dir, "summary.csv")
    exists = os.path.exists(path)
    with open(path, "a", newline="") as f:
        writer = csv.writer(f)
        if not exists:
            writer.writerow(
                ["task", "condition", "n", "success_rate", "success_stderr", "mean_steps", "mean_replans"]
            )
        writer.writerow(
            [
                config.task_id,
                config.condition,
                metrics.n,
                f"{metrics.success_rate:.3f}",
                f"{metrics.success_stderr:.3f}",
                "" if metrics.mean_steps is None else f"{metrics.mean_steps:.2f}",
                f"{metrics.mean_replans:.2f}",
            ]
        )
    return path
