"""Centralized RRT-Connect over the composite joint space of all arms.

Validated sub-task plans are turned into one or more composite goal
configurations (waypoint paths contribute one goal per step); the planner
chains bidirectional RRT segments through them. A benchmark harness compares
direct single-goal planning against waypoint-decomposed planning on
high-overlap "place across a wall" scenarios.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .actions import SubTaskPlan, Verb
from .kinematics import (
    ArmModel,
    Obstacle,
    collides,
    edge_free_fast,
    ik_solutions,
)

DEFAULT_STEP = 0.15  # max joint motion per tree extension (L-inf)
EDGE_RESOLUTION = 0.05


class InvalidProblem(ValueError):
    """Initial or goal composite config is not collision-free."""


@dataclass
class PlanningProblem:
    arms: list[ArmModel]
    obstacles: list[Obstacle]
    x_init: np.ndarray  # (N, 4)
    goals: list[np.ndarray]  # each (N, 4), visited in order
    iteration_budget: int = 50_000
    time_budget_s: float = 300.0
    rng_seed: int = 0

    def __post_init__(self):
        self.x_init = np.asarray(self.x_init, dtype=float)
        self.goals = [np.asarray(g, dtype=float) for g in self.goals]
        if not self.goals:
            raise InvalidProblem("a planning problem needs at least one goal")

    def flat_limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.concatenate([a.limits_lo() for a in self.arms])
        hi = np.concatenate([a.limits_hi() for a in self.arms])
        return lo, hi


@dataclass
class Trajectory:
    waypoints: list[np.ndarray]  # composite configs, first = x_init, last = final goal
    stats: dict = field(default_factory=dict)
    goal_indices: list[int] = field(default_factory=list)  # waypoint index of each goal

    def path_length(self) -> float:
        return float(
            sum(np.linalg.norm((b - a).ravel()) for a, b in zip(self.waypoints, self.waypoints[1:]))
        )

    def to_dict(self) -> dict:
        return {
            "waypoints": [w.tolist() for w in self.waypoints],
            "stats": dict(self.stats),
            "goal_indices": list(self.goal_indices),
        }


@dataclass
class Exhausted:
    stats: dict


def _shape(problem: PlanningProblem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (len(problem.arms), 4):
        raise InvalidProblem(f"composite config must be (N, 4), got {x.shape}")
    return x


def plan_rrt_connect(problem: PlanningProblem) -> Trajectory | Exhausted:
    """Plan x_init -> goal_1 -> ... -> goal_k by chaining RRT-Connect segments.

    Deterministic for a given rng_seed. Exhausted carries the stats accumulated
    before the iteration or time budget ran out.
    """
    arms, obstacles = problem.arms, problem.obstacles
    x_init = _shape(problem, problem.x_init)
    goals = [_shape(problem, g) for g in problem.goals]

    for label, x in [("x_init", x_init)] + [(f"goal_{i}", g) for i, g in enumerate(goals)]:
        rep = collides(arms, x, obstacles)
        if rep.pairs:
            raise InvalidProblem(f"{label} is in collision: {rep.pairs[:3]}")

    rng = np.random.default_rng(problem.rng_seed)
    lo, hi = problem.flat_limits()
    deadline = time.monotonic() + problem.time_budget_s
    stats = {"iterations": 0, "nodes": 0, "wall_time": 0.0}
    t0 = time.monotonic()

    waypoints = [x_init]
    goal_indices = []
    cur = x_init
    budget_left = problem.iteration_budget
    for goal in goals:
        seg = _rrt_connect_segment(arms, obstacles, cur, goal, lo, hi, budget_left, deadline, rng, stats)
        if seg is None:
            stats["wall_time"] = time.monotonic() - t0
            return Exhausted(stats)
        waypoints.extend(seg[1:])
        goal_indices.append(len(waypoints) - 1)
        budget_left = problem.iteration_budget - stats["iterations"]
        cur = goal
    stats["wall_time"] = time.monotonic() - t0
    if len(waypoints) < 2:  # single goal equal to init
        waypoints.append(waypoints[0].copy())
        goal_indices = [1]
    return Trajectory(waypoints=waypoints, stats=stats, goal_indices=goal_indices)


def _rrt_connect_segment(arms, obstacles, start, goal, lo, hi, budget, deadline, rng, stats):
    """Bidirectional RRT between two composite configs; returns config list or None."""
    n_arms = len(arms)
    dim = n_arms * 4
    start_f = start.ravel()
    goal_f = goal.ravel()

    def free_edge(a, b):
        return edge_free_fast(arms, a.reshape(n_arms, 4), b.reshape(n_arms, 4), obstacles)

    if free_edge(start_f, goal_f):
        stats["nodes"] += 2
        return [start, goal]

    trees = (
        {"nodes": [start_f], "parents": [-1]},
        {"nodes": [goal_f], "parents": [-1]},
    )

    def nearest(tree, q):
        arr = np.asarray(tree["nodes"])
        idx = int(np.argmin(np.linalg.norm(arr - q, axis=1)))
        return idx, tree["nodes"][idx]

    def steer(q_from, q_to):
        delta = np.clip(q_to - q_from, -DEFAULT_STEP, DEFAULT_STEP)
        return q_from + delta

    def extend(tree, q_target):
        """One step toward q_target; returns (status, new_index)."""
        idx, q_near = nearest(tree, q_target)
        q_new = steer(q_near, q_target)
        if not free_edge(q_near, q_new):
            return "trapped", -1
        tree["nodes"].append(q_new)
        tree["parents"].append(idx)
        if np.max(np.abs(q_new - q_target)) < 1e-9:
            return "reached", len(tree["nodes"]) - 1
        return "advanced", len(tree["nodes"]) - 1

    a, b = 0, 1
    while stats["iterations"] < budget:
        if time.monotonic() > deadline:
            return None
        stats["iterations"] += 1
        q_rand = rng.uniform(lo, hi)
        status, new_idx = extend(trees[a], q_rand)
        if status != "trapped":
            q_new = trees[a]["nodes"][new_idx]
            # connect: repeatedly extend the other tree toward q_new
            while True:
                status_b, idx_b = extend(trees[b], q_new)
                if status_b != "advanced":
                    break
            if status_b == "reached":
                path_a = _walk(trees[a], new_idx)
                path_b = _walk(trees[b], idx_b)
                if a == 0:
                    flat = path_a[::-1] + path_b[1:]
                else:
                    flat = path_b[::-1] + path_a[1:]
                stats["nodes"] += len(trees[0]["nodes"]) + len(trees[1]["nodes"])
                return [q.reshape(n_arms, 4) for q in flat]
        a, b = b, a
    stats["nodes"] += len(trees[0]["nodes"]) + len(trees[1]["nodes"])
    return None


def _walk(tree, idx):
    out = []
    while idx != -1:
        out.append(tree["nodes"][idx])
        idx = tree["parents"][idx]
    return out


def shortcut(trajectory: Trajectory, problem: PlanningProblem, attempts: int = 200) -> Trajectory:
    """Random pairwise shortcutting within each inter-goal span.

    Never removes a goal waypoint, never lengthens the config-space path, and
    every resulting edge is re-checked.
    """
    arms, obstacles = problem.arms, problem.obstacles
    rng = np.random.default_rng(problem.rng_seed + 1)
    pts = [w.copy() for w in trajectory.waypoints]
    pinned = {0, len(pts) - 1} | {i for i in trajectory.goal_indices}

    for _ in range(attempts):
        if len(pts) < 3:
            break
        i = int(rng.integers(0, len(pts) - 2))
        j = int(rng.integers(i + 2, len(pts)))
        if any(k in pinned for k in range(i + 1, j)):
            continue
        if edge_free_fast(arms, pts[i], pts[j], obstacles):
            removed = j - i - 1
            del pts[i + 1 : j]
            pinned = {p - removed if p >= j else p for p in pinned}
    goal_indices = sorted(pinned - {0}) if trajectory.goal_indices else []
    return Trajectory(waypoints=pts, stats=dict(trajectory.stats), goal_indices=goal_indices)


# ---------------------------------------------------------------------------
# Goal extraction from validated plans


def goals_from_plan(
    plan: SubTaskPlan,
    scene,
    arms: list[ArmModel],
    report,
    current_config,
) -> list[np.ndarray]:
    """Composite goal configs for a validated plan (IK solutions cached in the report).

    Waypoint tasks produce one composite per waypoint index (shorter paths pad
    with their final config, WAIT agents hold the current config); other tasks
    produce a single goal composite.
    """
    task = scene.task
    current = np.asarray(current_config, dtype=float)
    roster = task.roster

    if not task.waypoints_required:
        composite = current.copy()
        for i, agent in enumerate(roster):
            q = report.goal_configs.get(agent)
            if q is not None:
                composite[i] = q
        return [composite]

    lengths = [len(v) for v in report.waypoint_configs.values()]
    n_steps = max(lengths, default=0)
    if n_steps == 0:
        return [current.copy()]
    goals = []
    for k in range(n_steps):
        composite = current.copy()
        for agent, configs in report.waypoint_configs.items():
            composite[roster.index(agent)] = configs[min(k, len(configs) - 1)]
        goals.append(composite)
    return goals


# ---------------------------------------------------------------------------
# Waypoint-decomposition benchmark (high-overlap place scenarios)


@dataclass
class PlaceScenario:
    name: str
    arms: list[ArmModel]
    obstacles: list[Obstacle]
    x_init: np.ndarray
    direct_goal: np.ndarray
    decomposed_goals: list[np.ndarray]
    hardcode_goals: list[np.ndarray]


_BENCH_WALL_H = 0.30


def _bench_arms() -> list[ArmModel]:
    return [
        ArmModel("south", base_pos=(0.0, -0.42, 0.0), base_yaw=np.pi / 2),
        ArmModel("north", base_pos=(0.0, 0.42, 0.0), base_yaw=-np.pi / 2),
    ]


def _composite_for_points(arms, points, obstacles, seed=0, strict=True, near=None) -> np.ndarray:
    """A collision-free composite whose end effectors sit at the given points.

    Searches combinations of per-arm IK branches until the full composite
    (cross-arm and vs obstacles) is free; when ``near`` is given, branches
    closest to that composite are preferred so consecutive goals stay on the
    same IK branch. With strict=False an infeasible point set degrades to the
    first IK branches (possibly in collision), so baselines with bad waypoints
    can still be scored by the planner.
    """
    candidate_sets = []
    for i, (arm, p) in enumerate(zip(arms, points)):
        all_cands = ik_solutions(arm, p, seed=seed)
        if not all_cands:
            raise RuntimeError(f"point {p} unreachable for {arm.name}")
        cands = [q for q in all_cands if not collides([arm], q[None], obstacles)]
        if not cands:
            if strict:
                raise RuntimeError(f"no clear IK branch for {arm.name} at {p}")
            cands = all_cands[:1]
        if near is not None:
            cands.sort(key=lambda q: float(np.linalg.norm(q - near[i])))
        candidate_sets.append(cands)

    def search(i, chosen):
        if i == len(arms):
            return list(chosen)
        for q in candidate_sets[i]:
            chosen.append(q)
            if not collides(arms[: i + 1], np.stack(chosen), obstacles).pairs:
                result = search(i + 1, chosen)
                if result is not None:
                    return result
            chosen.pop()
        return None

    combo = search(0, [])
    if combo is None:
        if strict:
            raise RuntimeError(f"no collision-free composite for points {points}")
        combo = [c[0] for c in candidate_sets]
    return np.stack(combo)


def _arc_points(start, goal, lift_z: float, n: int) -> list[tuple[float, float, float]]:
    knees = [tuple(start), (start[0], start[1], lift_z), (goal[0], goal[1], lift_z), tuple(goal)]
    pts = np.asarray(knees, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    samples = np.linspace(0.0, cum[-1], n)
    out = []
    for s in samples:
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
        frac = 0.0 if seg[i] == 0 else (s - cum[i]) / seg[i]
        out.append(tuple(pts[i] + frac * (pts[i + 1] - pts[i])))
    return out


def make_place_scenario(seed: int) -> PlaceScenario:
    """Two arms each carrying an item over a 0.3 m wall to the opposite side."""
    rng = np.random.default_rng(seed)
    arms = _bench_arms()
    # spans the whole reachable width, so the only route is over the top
    wall = Obstacle.aabb((-0.90, -0.015, 0.0), (0.90, 0.015, _BENCH_WALL_H), name="wall")

    dx = float(rng.uniform(-0.04, 0.04))
    start_s = (-0.08 + dx, -0.22, 0.12)
    goal_s = (-0.08 + dx, 0.16, 0.38)
    start_n = (0.08 + dx, 0.22, 0.12)
    goal_n = (0.08 + dx, -0.16, 0.38)

    obstacles = [wall]
    n_steps = 6  # 4 intermediate goals plus the final pose
    path_s = _arc_points(start_s, goal_s, 0.44, n_steps)
    path_n = _arc_points(start_n, goal_n, 0.44, n_steps)

    # anchor the start pose's IK branch to the arc's first step so the chain
    # of goals stays on one branch instead of flipping elbows mid-air
    provisional = _composite_for_points(arms, [path_s[1], path_n[1]], obstacles, seed=seed)
    x_init = _composite_for_points(arms, [start_s, start_n], obstacles, seed=seed, near=provisional)
    decomposed = []
    prev = x_init
    for k in range(1, n_steps):
        prev = _composite_for_points(arms, [path_s[k], path_n[k]], obstacles, seed=seed, near=prev)
        decomposed.append(prev)
    # both methods aim for the identical final composite
    direct_goal = decomposed[-1]

    # top-down baseline: fixed lift height below the wall crest
    hard_s = _arc_points(start_s, goal_s, 0.25, n_steps)
    hard_n = _arc_points(start_n, goal_n, 0.25, n_steps)
    hardcode = []
    prev = x_init
    for k in range(1, n_steps):
        prev = _composite_for_points(
            arms, [hard_s[k], hard_n[k]], obstacles, seed=seed, strict=False, near=prev
        )
        hardcode.append(prev)

    return PlaceScenario(
        name=f"place_wall_seed{seed}",
        arms=arms,
        obstacles=obstacles,
        x_init=x_init,
        direct_goal=direct_goal,
        decomposed_goals=decomposed,
        hardcode_goals=hardcode,
    )


def run_place_benchmark(
    seeds: list[int],
    iteration_budget: int = 8000,
    time_budget_s: float = 300.0,
    methods: tuple[str, ...] = ("direct", "decomposed", "hardcode"),
) -> list[dict]:
    """One row per (scenario, method): success, nodes, iterations, wall_time."""
    rows = []
    for seed in seeds:
        scenario = make_place_scenario(seed)
        goal_sets = {
            "direct": [scenario.direct_goal],
            "decomposed": scenario.decomposed_goals,
            "hardcode": scenario.hardcode_goals,
        }
        for method in methods:
            problem = PlanningProblem(
                arms=scenario.arms,
                obstacles=scenario.obstacles,
                x_init=scenario.x_init,
                goals=goal_sets[method],
                iteration_budget=iteration_budget,
                time_budget_s=time_budget_s,
                rng_seed=seed,
            )
            try:
                result = plan_rrt_connect(problem)
            except InvalidProblem:
                rows.append(_bench_row(scenario.name, method, False, {"iterations": 0, "nodes": 0, "wall_time": 0.0}))
                continue
            ok = isinstance(result, Trajectory)
            rows.append(_bench_row(scenario.name, method, ok, result.stats if ok else result.stats))
    return rows


def _bench_row(scenario: str, method: str, success: bool, stats: dict) -> dict:
    return {
        "scenario": scenario,
        "method": method,
        "success": int(success),
        "nodes": stats.get("nodes", 0),
        "iterations": stats.get("iterations", 0),
        "wall_time": round(stats.get("wall_time", 0.0), 3),
    }


def write_benchmark_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["scenario", "method", "success", "nodes", "iterations", "wall_time"])
        writer.writeheader()
        writer.writerows(rows)


def write_benchmark_json(rows: list[dict], path: str) -> None:
    with open(path, "w") as f:
        json.dump(rows, f, indent=2)
